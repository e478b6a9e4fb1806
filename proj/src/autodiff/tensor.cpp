#include "factr/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "factr/autodiff/tape.hpp"

namespace factr::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename Real>
void TensorImpl<Real>::accumulate_grad(std::span<const Real> g) {
  Real* dst = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename Real>
Real* TensorImpl<Real>::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad.data();
}

template <typename Real>
Tensor<Real>::Tensor() : impl_(std::make_shared<TensorImpl<Real>>()) {}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : impl_(std::make_shared<TensorImpl<Real>>()) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  impl_->data.assign(factr::ad::numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data)
    : impl_(std::make_shared<TensorImpl<Real>>()) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  if (factr::ad::numel(shape) != data.size())
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::initializer_list<Real> values) {
  return Tensor(std::move(shape), std::vector<Real>(values));
}

template <typename Real>
std::size_t Tensor<Real>::size(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(dim());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1)
    throw ContractError("item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

template <typename Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return Tensor(impl_->shape, impl_->data);
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  auto impl = std::make_shared<TensorImpl<Real>>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

template <typename Real>
Tape<Real>& Tape<Real>::active() {
  static thread_local Tape<Real> tape;
  return tape;
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (loss.numel() != 1) {
    clear();
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  const Real one = Real(1);
  loss.impl()->accumulate_grad(std::span<const Real>(&one, 1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
  clear();
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace factr::ad
