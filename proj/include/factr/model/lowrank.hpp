#pragma once

#include <Eigen/Dense>

namespace factr::model {

/// ||S - S_r||_F^2 where S_r is the truncated-SVD rank-r approximation.
/// Throws ConfigError for a non-square S.
double low_rank_optimality_check(const Eigen::MatrixXd& s, std::size_t r);

/// Singular values in descending order.
Eigen::VectorXd singular_values(const Eigen::MatrixXd& m);

/// Number of singular values above tol * largest.
std::size_t numerical_rank(const Eigen::MatrixXd& m, double tol = 1e-9);

}  // namespace factr::model
