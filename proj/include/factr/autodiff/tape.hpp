#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "factr/autodiff/tensor.hpp"

namespace factr::ad {

template <typename Real>
struct TapeNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<Real>>> inputs;
  std::shared_ptr<TensorImpl<Real>> output;
  // Reads output->grad and accumulates into the inputs that require grad.
  std::function<void()> backward;
};

/// Append-only record of differentiable ops executed on this thread.
/// Node order is creation order, which is a topological order, so the
/// backward sweep simply walks it in reverse.
template <typename Real>
class Tape {
 public:
  static Tape& active();

  bool recording() const { return enabled_; }
  void set_recording(bool on) { enabled_ = on; }

  void push(TapeNode<Real> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Reverse sweep from a scalar loss. Clears the tape afterwards.
  void backward(const Tensor<Real>& loss);

 private:
  std::vector<TapeNode<Real>> nodes_;
  bool enabled_ = true;
};

/// Disables tape recording for the lifetime of the guard.
template <typename Real>
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape<Real>::active().recording()) {
    Tape<Real>::active().set_recording(false);
  }
  ~NoGradGuard() { Tape<Real>::active().set_recording(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename Real>
void backward(const Tensor<Real>& loss) {
  Tape<Real>::active().backward(loss);
}

}  // namespace factr::ad
