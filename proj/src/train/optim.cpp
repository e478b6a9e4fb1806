#include "factr/train/optim.hpp"

#include <cmath>
#include <numbers>

#include "factr/common/errors.hpp"

namespace factr::train {

template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape())
    throw ad::DimensionError("mse_loss: prediction " + ad::shape_str(pred.shape()) +
                             " vs target " + ad::shape_str(target.shape()));
  auto d = ad::sub(pred, target);
  return ad::mean(ad::mul(d, d));
}

template <typename Real>
Tensor<Real> mae_loss(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape())
    throw ad::DimensionError("mae_loss: prediction " + ad::shape_str(pred.shape()) +
                             " vs target " + ad::shape_str(target.shape()));
  return ad::mean(ad::abs(ad::sub(pred, target)));
}

template <typename Real>
ErrorSums error_sums(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape())
    throw ad::DimensionError("error_sums: prediction " + ad::shape_str(pred.shape()) +
                             " vs target " + ad::shape_str(target.shape()));
  ErrorSums s;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    s.sq += d * d;
    s.abs += std::abs(d);
  }
  s.count = pred.numel();
  return s;
}

template <typename Real>
void Adam<Real>::step(std::vector<std::pair<std::string, Tensor<Real>>>& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  if (m_.size() != params.size()) throw ad::ContractError("Adam: parameter list changed size");
  for (auto& [name, p] : params)
    if (p.requires_grad() && !p.has_grad())
      throw ad::ContractError("Adam: trainable tensor '" + name + "' has no gradient");
  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].second;
    if (!p.requires_grad()) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    auto g = p.grad();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1 - b1) * gi;
      v[i] = b2 * v[i] + (1 - b2) * gi * gi;
      const double mh = m[i] / c1, vh = v[i] / c2;
      w[i] = static_cast<Real>(w[i] - lr * mh / (std::sqrt(vh) + opts_.eps));
    }
  }
}

template <typename Real>
SamInfo sam_step(std::vector<std::pair<std::string, Tensor<Real>>>& params,
                 const std::function<Tensor<Real>()>& loss_fn, double rho, Adam<Real>& adam,
                 double lr) {
  if (!(rho >= 0)) throw ConfigError("SAM radius rho must be non-negative");
  auto zero_grads = [&] {
    for (auto& [name, p] : params) p.zero_grad();
  };
  zero_grads();
  SamInfo info;
  auto loss = loss_fn();
  info.loss = static_cast<double>(loss.item());
  if (!std::isfinite(info.loss)) {
    ad::Tape<Real>::active().clear();
    return info;
  }
  ad::backward(loss);

  double sq = 0;
  for (auto& [name, p] : params)
    if (p.requires_grad() && p.has_grad())
      for (Real g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  info.grad_norm = std::sqrt(sq);

  if (rho > 0 && info.grad_norm > 0) {
    std::vector<std::vector<Real>> saved(params.size());
    const double s = rho / info.grad_norm;
    double applied = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].second;
      if (!p.requires_grad() || !p.has_grad()) continue;
      auto w = p.data();
      saved[k].assign(w.begin(), w.end());
      auto g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double e = s * static_cast<double>(g[i]);
        applied += e * e;
        w[i] = static_cast<Real>(w[i] + e);
      }
    }
    info.perturb_norm = std::sqrt(applied);
    zero_grads();
    ad::backward(loss_fn());
    for (std::size_t k = 0; k < params.size(); ++k)
      if (!saved[k].empty()) std::copy(saved[k].begin(), saved[k].end(), params[k].second.data().begin());
  }
  adam.step(params, lr);
  return info;
}

double cosine_warm_restart_lr(std::size_t epoch, std::size_t t0, double mult, double lr_max,
                              double lr_min) {
  if (t0 == 0 || mult < 1) throw ConfigError("scheduler needs T0 >= 1 and mult >= 1");
  double period = static_cast<double>(t0);
  double start = 0;
  const double e = static_cast<double>(epoch);
  while (e >= start + period) {
    start += period;
    period *= mult;
  }
  const double t = (e - start) / period;
  return lr_min + 0.5 * (lr_max - lr_min) * (1 + std::cos(std::numbers::pi * t));
}

#define FACTR_INSTANTIATE_OPTIM(R)                                                        \
  template Tensor<R> mse_loss(const Tensor<R>&, const Tensor<R>&);                        \
  template Tensor<R> mae_loss(const Tensor<R>&, const Tensor<R>&);                        \
  template ErrorSums error_sums(const Tensor<R>&, const Tensor<R>&);                      \
  template class Adam<R>;                                                                 \
  template SamInfo sam_step(std::vector<std::pair<std::string, Tensor<R>>>&,              \
                            const std::function<Tensor<R>()>&, double, Adam<R>&, double);

FACTR_INSTANTIATE_OPTIM(float)
FACTR_INSTANTIATE_OPTIM(double)

}  // namespace factr::train
