#include "factr/data/masking.hpp"

#include <cmath>
#include <numeric>

#include "factr/common/errors.hpp"
#include "factr/common/random.hpp"

namespace factr::data {

template <typename Real>
std::pair<ad::Tensor<Real>, ad::IndexTensor> mask_patches(const ad::Tensor<Real>& inputs,
                                                          std::size_t patch, double ratio,
                                                          std::mt19937_64& rng) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  if (inputs.dim() != 3) throw ad::DimensionError("mask_patches expects [B, C, L], got " +
                                                  ad::shape_str(inputs.shape()));
  const std::size_t b = inputs.size(0), c = inputs.size(1), l = inputs.size(2);
  if (patch == 0 || l % patch != 0)
    throw ConfigError("lookback " + std::to_string(l) + " is not divisible by patch length " +
                      std::to_string(patch));
  const std::size_t n = l / patch;
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  ad::Tensor<Real> out = inputs.clone();
  ad::IndexTensor flags({b, c, n});
  auto v = out.data();
  std::vector<std::size_t> ids(n);
  for (std::size_t row = 0; row < b * c; ++row) {
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + rnd::index(rng, n - i);
      std::swap(ids[i], ids[j]);
      flags.data[row * n + ids[i]] = 1;
      for (std::size_t k = 0; k < patch; ++k) v[row * l + ids[i] * patch + k] = Real(0);
    }
  }
  return {out, flags};
}

template std::pair<ad::Tensor<float>, ad::IndexTensor> mask_patches(const ad::Tensor<float>&,
                                                                    std::size_t, double,
                                                                    std::mt19937_64&);
template std::pair<ad::Tensor<double>, ad::IndexTensor> mask_patches(const ad::Tensor<double>&,
                                                                     std::size_t, double,
                                                                     std::mt19937_64&);

}  // namespace factr::data
