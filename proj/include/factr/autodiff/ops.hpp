#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "factr/autodiff/tape.hpp"
#include "factr/autodiff/tensor.hpp"

// Differentiable kernels. Every op records a backward rule on the active
// tape when any input requires grad and recording is enabled.
namespace factr::ad {

// Elementwise binary ops with numpy-style broadcasting.
template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real> Tensor<Real> scale(const Tensor<Real>& x, Real s);
template <typename Real> Tensor<Real> add_scalar(const Tensor<Real>& x, Real s);

/// Batched matrix product [..., m, k] x [..., k, n] -> [..., m, n].
/// Leading batch extents broadcast; a 2-D right operand is shared by all
/// batches and runs as a single GEMM.
template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

/// x[..., in] * weight[in, out] + bias[out]. Bias may be an empty tensor.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias);

/// v v^T over the last two axes: [..., n, r] -> [..., n, n]. The result is
/// symmetric bit-for-bit.
template <typename Real> Tensor<Real> gram(const Tensor<Real>& v);

template <typename Real> Tensor<Real> softmax(const Tensor<Real>& x, std::ptrdiff_t axis);

/// Normalises over the last axis with biased variance.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, Real eps = Real(1e-5));

template <typename Real> Tensor<Real> gelu(const Tensor<Real>& x);  // exact erf form
template <typename Real> Tensor<Real> sigmoid(const Tensor<Real>& x);
template <typename Real> Tensor<Real> abs(const Tensor<Real>& x);
template <typename Real> Tensor<Real> log(const Tensor<Real>& x);

template <typename Real> Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> sum_axis(const Tensor<Real>& x, std::ptrdiff_t axis, bool keepdim = false);
template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, std::ptrdiff_t axis, bool keepdim = false);

template <typename Real> Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);
template <typename Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes);
template <typename Real> Tensor<Real> transpose_last(const Tensor<Real>& x);

/// Concatenation along the last axis.
template <typename Real> Tensor<Real> concat_last(const std::vector<Tensor<Real>>& parts);

/// Row lookup: table[V, D] gathered by indices[...] -> [..., D].
/// Throws std::out_of_range when an index falls outside [0, V).
template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, const IndexTensor& indices);

/// Sliding windows along the last axis: [..., L] -> [..., N, P] with
/// N = floor((L - P) / S) + 1.
template <typename Real>
Tensor<Real> unfold(const Tensor<Real>& x, std::size_t patch, std::size_t stride);

/// x[..., begin : begin + length] along the last axis.
template <typename Real>
Tensor<Real> slice_last(const Tensor<Real>& x, std::size_t begin, std::size_t length);

/// Per-feature temporal convolution: x[..., L, D] with weight[D, P] and
/// bias[D] -> [..., N, D].
template <typename Real>
Tensor<Real> depthwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& weight,
                              const Tensor<Real>& bias, std::size_t stride);

/// Inverted dropout. Identity when !training or p == 0.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real p, std::mt19937_64& rng, bool training);

/// Fails with ContractError naming the op if any value is NaN or Inf.
template <typename Real> void check_finite(const Tensor<Real>& x, const char* where);

/// Max over components of |analytic - central difference| / max(1, |analytic|).
/// Runs at the precision of Real; intended for 64-bit.
template <typename Real>
Real grad_check(const std::function<Tensor<Real>(const Tensor<Real>&)>& f,
                const Tensor<Real>& x, Real h = Real(1e-5));

}  // namespace factr::ad
