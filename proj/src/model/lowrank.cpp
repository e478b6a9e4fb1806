#include "factr/model/lowrank.hpp"

#include <string>

#include "factr/common/errors.hpp"

namespace factr::model {

double low_rank_optimality_check(const Eigen::MatrixXd& s, std::size_t r) {
  if (s.rows() != s.cols())
    throw ConfigError("low_rank_optimality_check needs a square matrix, got " +
                      std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  if (s.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto keep = std::min<Eigen::Index>(static_cast<Eigen::Index>(r), s.rows());
  const Eigen::MatrixXd approx = svd.matrixU().leftCols(keep) *
                                 svd.singularValues().head(keep).asDiagonal() *
                                 svd.matrixV().leftCols(keep).transpose();
  return (s - approx).squaredNorm();
}

Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
}

std::size_t numerical_rank(const Eigen::MatrixXd& m, double tol) {
  const auto sv = singular_values(m);
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * sv(0)) ++r;
  return r;
}

}  // namespace factr::model
