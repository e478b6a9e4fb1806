#pragma once

#include <functional>
#include <string>
#include <vector>

#include "factr/autodiff/ops.hpp"
#include "factr/model/model.hpp"

namespace factr::train {

template <typename Real>
using Tensor = ad::Tensor<Real>;

/// Mean squared error over all elements (differentiable).
template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target);

/// Mean absolute error over all elements (differentiable).
template <typename Real>
Tensor<Real> mae_loss(const Tensor<Real>& pred, const Tensor<Real>& target);

/// Plain sums for metric accumulation: {sum sq err, sum abs err, count}.
struct ErrorSums {
  double sq = 0;
  double abs = 0;
  std::size_t count = 0;

  void add(const ErrorSums& o) {
    sq += o.sq;
    abs += o.abs;
    count += o.count;
  }
  double mse() const { return count ? sq / static_cast<double>(count) : 0.0; }
  double mae() const { return count ? abs / static_cast<double>(count) : 0.0; }
};

template <typename Real>
ErrorSums error_sums(const Tensor<Real>& pred, const Tensor<Real>& target);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable tensors of a parameter list.
/// Tensors with requires_grad off are skipped.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  /// Throws ContractError naming the first trainable tensor without a grad.
  void step(std::vector<std::pair<std::string, Tensor<Real>>>& params, double lr);
  std::uint64_t steps() const { return t_; }

 private:
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct SamInfo {
  double loss = 0;          // loss at the unperturbed point
  double grad_norm = 0;     // global L2 norm of the first gradient
  double perturb_norm = 0;  // ||epsilon|| actually applied
};

/// One SAM update. `loss_fn` runs a forward pass and returns the scalar
/// loss; it is called once (rho == 0 or zero gradient) or twice.
template <typename Real>
SamInfo sam_step(std::vector<std::pair<std::string, Tensor<Real>>>& params,
                 const std::function<Tensor<Real>()>& loss_fn, double rho, Adam<Real>& adam,
                 double lr);

/// Cosine annealing with warm restarts, evaluated per epoch (0-based).
double cosine_warm_restart_lr(std::size_t epoch, std::size_t t0, double mult, double lr_max,
                              double lr_min);

}  // namespace factr::train
