#pragma once

#include <optional>
#include <random>
#include <vector>

#include "factr/autodiff/ops.hpp"

// The network's building blocks as free functions over explicit weights.
// Activations are laid out [B, C, N, D] unless noted.
namespace factr::model {

template <typename Real>
using Tensor = ad::Tensor<Real>;

template <typename Real>
struct LinearW {
  Tensor<Real> weight;  // [in, out]
  Tensor<Real> bias;    // [out] or empty
};

template <typename Real>
struct NormW {
  Tensor<Real> gamma;
  Tensor<Real> beta;
};

template <typename Real>
struct AttentionW {
  NormW<Real> norm;
  LinearW<Real> q, k, v, o;
};

template <typename Real>
struct MlpW {
  NormW<Real> norm;
  LinearW<Real> fc1, fc2;
};

inline constexpr double kRevinEps = 1e-5;

/// Per-(instance, channel) statistics over the time axis. Held constant
/// with respect to the graph.
template <typename Real>
struct RevINState {
  Tensor<Real> mu;     // [B, C, 1]
  Tensor<Real> sigma;  // [B, C, 1]
  Real eps = Real(kRevinEps);
};

/// gamma(x - mu) / (sigma + eps) + beta with gamma, beta of shape [C].
template <typename Real>
std::pair<Tensor<Real>, RevINState<Real>> revin_normalize(const Tensor<Real>& x,
                                                          const NormW<Real>& affine);

/// Inverse of revin_normalize for y[B, C, T].
template <typename Real>
Tensor<Real> revin_denormalize(const Tensor<Real>& y, const RevINState<Real>& state,
                               const NormW<Real>& affine);

/// Unfolds x[B, C, L] into patches, projects P -> D and adds pos[N, D].
template <typename Real>
Tensor<Real> patchify_and_embed(const Tensor<Real>& x, std::size_t patch, std::size_t stride,
                                const LinearW<Real>& proj, const Tensor<Real>& pos);

/// Per-channel static attributes: categorical codes [C, M] and continuous
/// features [C, Q].
struct StaticAttributes {
  ad::IndexTensor categorical;
  ad::Tensor<double> continuous;
};

/// channel_id[C, D] + sum of categorical rows + continuous[C, Q] w_cont[Q, D].
template <typename Real>
Tensor<Real> static_embedding(const Tensor<Real>& channel_id,
                              const std::vector<Tensor<Real>>& cat_tables,
                              const Tensor<Real>& w_cont, const StaticAttributes* attrs);

/// Dynamic covariates codes[B, C', L, K] (C' = 1 shares across channels) ->
/// [B, C', N, D] via lookup, concat, merge linear and depthwise conv.
template <typename Real>
Tensor<Real> dynamic_embedding(const ad::IndexTensor& codes,
                               const std::vector<Tensor<Real>>& tables,
                               const LinearW<Real>& merge, const LinearW<Real>& conv,
                               std::size_t stride);

/// H0 = E_patch + E_spatial (broadcast over B and N) + E_dyn (broadcast over C').
template <typename Real>
Tensor<Real> context_prior(const Tensor<Real>& e_patch, const Tensor<Real>* e_spatial,
                           const Tensor<Real>* e_dyn);

/// Pre-LN single-head attention over the patch axis with a residual.
/// When weights_out is set it receives the softmax rows [B, C, N, N].
template <typename Real>
Tensor<Real> temporal_attention(const Tensor<Real>& x, const AttentionW<Real>& w, Real dropout,
                                std::mt19937_64& rng, bool training,
                                Tensor<Real>* weights_out = nullptr);

/// Factor vectors v = H0 W_fm, scores S[b, n, i, j] = <v_i, v_j> and
/// A = softmax_j(S / sqrt(r)). Both come back in [B, N, C, C] layout.
template <typename Real>
struct FmScores {
  Tensor<Real> scores;
  Tensor<Real> weights;
};

template <typename Real>
FmScores<Real> fm_scores(const Tensor<Real>& h0, const LinearW<Real>& fm);

/// D -> r_sp -> D bottleneck.
template <typename Real>
Tensor<Real> spatial_projection(const Tensor<Real>& z, const LinearW<Real>& low,
                                const LinearW<Real>& high);

/// Z_spatial = A V; G = sigmoid(Z_temp W_g + b); G Z_temp + (1 - G) Z_spatial.
/// a_spatial is [B, N, C, C] as returned by fm_scores.
template <typename Real>
Tensor<Real> gated_fusion(const Tensor<Real>& z_temp, const Tensor<Real>& a_spatial,
                          const Tensor<Real>& v_spatial, const LinearW<Real>& gate,
                          Tensor<Real>* gate_out = nullptr);

/// z + W2 dropout(GELU(W1 LN(z))).
template <typename Real>
Tensor<Real> embedding_mlp(const Tensor<Real>& z, const MlpW<Real>& w, Real dropout,
                           std::mt19937_64& rng, bool training);

/// Flattens [B, C, N, D] -> [B, C, N D] and applies the shared head -> [B, C, T].
template <typename Real>
Tensor<Real> project_forecast(const Tensor<Real>& z, const LinearW<Real>& head);

/// [B, N, C, C] -> [B, C, C, N] value copy (no graph).
template <typename Real>
Tensor<Real> channel_scores_to_bccn(const Tensor<Real>& bncc);

}  // namespace factr::model
