#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "factr/autodiff/tensor.hpp"

namespace factr::data {

/// Zeroes round(ratio * N) randomly chosen non-overlapping patches in every
/// (batch, channel) row of inputs[B, C, L]. Returns the masked copy and a
/// [B, C, N] flag tensor (1 = masked). L must be divisible by P and ratio
/// must lie in (0, 1).
template <typename Real>
std::pair<ad::Tensor<Real>, ad::IndexTensor> mask_patches(const ad::Tensor<Real>& inputs,
                                                          std::size_t patch, double ratio,
                                                          std::mt19937_64& rng);

template <typename Real>
std::pair<ad::Tensor<Real>, ad::IndexTensor> mask_patches(const ad::Tensor<Real>& inputs,
                                                          std::size_t patch, double ratio,
                                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return mask_patches(inputs, patch, ratio, rng);
}

}  // namespace factr::data
