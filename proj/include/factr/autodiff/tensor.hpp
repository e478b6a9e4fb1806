#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace factr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible for an op.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates an op precondition (non-scalar loss,
/// missing gradient, non-finite value).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  void accumulate_grad(std::span<const Real> g);
  Real* grad_buffer();  // zero-initialises on first use
};

/// Dense row-major array with an optional gradient slot. Copies share
/// storage; use clone() for a deep copy.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor();
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Real v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(Real v) { return Tensor(Shape{1}, v); }
  static Tensor from(Shape shape, std::initializer_list<Real> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::ptrdiff_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  Real item() const;
  Real& operator[](std::size_t i) { return impl_->data[i]; }
  Real operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  std::span<Real> grad_mut() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy of values, detached from any tape.
  Tensor clone() const;
  /// Same storage viewed as a tape-free constant.
  Tensor detach() const;

  TensorImpl<Real>* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<Real>>& handle() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<Real>> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl<Real>> impl_;

  template <typename R>
  friend Tensor<R> wrap(std::shared_ptr<TensorImpl<R>> impl);
};

template <typename Real>
Tensor<Real> wrap(std::shared_ptr<TensorImpl<Real>> impl) {
  return Tensor<Real>(std::move(impl));
}

/// Integer tensor used for categorical covariates and masks.
struct IndexTensor {
  Shape shape;
  std::vector<std::int32_t> data;

  IndexTensor() = default;
  explicit IndexTensor(Shape s, std::int32_t fill = 0)
      : shape(std::move(s)), data(factr::ad::numel(shape), fill) {}
  std::size_t numel() const { return data.size(); }
};

}  // namespace factr::ad
