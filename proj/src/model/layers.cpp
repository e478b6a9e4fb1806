#include "factr/model/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "factr/common/errors.hpp"

namespace factr::model {

using ad::Shape;

template <typename Real>
std::pair<Tensor<Real>, RevINState<Real>> revin_normalize(const Tensor<Real>& x,
                                                          const NormW<Real>& affine) {
  if (x.dim() != 3) throw ad::DimensionError("revin_normalize expects [B, C, L], got " + ad::shape_str(x.shape()));
  const std::size_t b = x.size(0), c = x.size(1), l = x.size(2);
  if (affine.gamma.numel() != c || affine.beta.numel() != c)
    throw ad::DimensionError("revin affine has " + std::to_string(affine.gamma.numel()) +
                             " channels, input has " + std::to_string(c));
  RevINState<Real> st;
  st.mu = Tensor<Real>({b, c, 1});
  st.sigma = Tensor<Real>({b, c, 1});
  Tensor<Real> denom({b, c, 1});
  auto px = x.data();
  for (std::size_t r = 0; r < b * c; ++r) {
    double m = 0;
    for (std::size_t t = 0; t < l; ++t) m += px[r * l + t];
    m /= static_cast<double>(l);
    double v = 0;
    for (std::size_t t = 0; t < l; ++t) {
      const double d = px[r * l + t] - m;
      v += d * d;
    }
    const double s = std::sqrt(v / static_cast<double>(l));
    st.mu[r] = static_cast<Real>(m);
    st.sigma[r] = static_cast<Real>(s);
    denom[r] = static_cast<Real>(s + kRevinEps);
  }
  auto gamma = ad::reshape(affine.gamma, {c, 1});
  auto beta = ad::reshape(affine.beta, {c, 1});
  auto z = ad::div(ad::sub(x, st.mu), denom);
  return {ad::add(ad::mul(z, gamma), beta), st};
}

template <typename Real>
Tensor<Real> revin_denormalize(const Tensor<Real>& y, const RevINState<Real>& state,
                               const NormW<Real>& affine) {
  if (y.dim() != 3 || state.mu.dim() != 3 || y.size(0) != state.mu.size(0) ||
      y.size(1) != state.mu.size(1))
    throw ad::ContractError("revin_denormalize: forecast " + ad::shape_str(y.shape()) +
                            " does not match the normalisation state");
  const std::size_t c = y.size(1);
  Tensor<Real> denom(state.sigma.shape());
  for (std::size_t i = 0; i < denom.numel(); ++i) denom[i] = state.sigma[i] + state.eps;
  auto gamma = ad::reshape(affine.gamma, {c, 1});
  auto beta = ad::reshape(affine.beta, {c, 1});
  auto z = ad::div(ad::sub(y, beta), gamma);
  return ad::add(ad::mul(z, denom), state.mu);
}

template <typename Real>
Tensor<Real> patchify_and_embed(const Tensor<Real>& x, std::size_t patch, std::size_t stride,
                                const LinearW<Real>& proj, const Tensor<Real>& pos) {
  auto patches = ad::unfold(x, patch, stride);  // [B, C, N, P]
  if (pos.numel() != patches.size(2) * proj.weight.size(1))
    throw ad::DimensionError("positional table " + ad::shape_str(pos.shape()) + " does not match " +
                             std::to_string(patches.size(2)) + " patches");
  return ad::add(ad::linear(patches, proj.weight, proj.bias), pos);
}

template <typename Real>
Tensor<Real> static_embedding(const Tensor<Real>& channel_id,
                              const std::vector<Tensor<Real>>& cat_tables,
                              const Tensor<Real>& w_cont, const StaticAttributes* attrs) {
  const std::size_t c = channel_id.size(0);
  Tensor<Real> out = channel_id;
  const std::size_t m = cat_tables.size();
  const bool has_cont = w_cont.numel() > 0;
  if ((m > 0 || has_cont) && !attrs)
    throw ConfigError("model expects static channel attributes but none were supplied");
  if (m > 0) {
    const auto& cat = attrs->categorical;
    if (cat.shape != Shape{c, m})
      throw ConfigError("static categorical attributes must be [" + std::to_string(c) + ", " +
                        std::to_string(m) + "], got " + ad::shape_str(cat.shape));
    for (std::size_t a = 0; a < m; ++a) {
      ad::IndexTensor idx({c});
      const auto card = static_cast<std::int32_t>(cat_tables[a].size(0));
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::int32_t v = cat.data[ch * m + a];
        if (v < 0 || v >= card)
          throw ConfigError("static attribute " + std::to_string(a) + ": channel " +
                            std::to_string(ch) + " has category " + std::to_string(v) +
                            " outside [0, " + std::to_string(card) + ")");
        idx.data[ch] = v;
      }
      out = ad::add(out, ad::embedding(cat_tables[a], idx));
    }
  }
  if (has_cont) {
    const std::size_t q = w_cont.size(0);
    const auto& cont = attrs->continuous;
    if (cont.numel() != c * q)
      throw ConfigError("static continuous attributes must be [" + std::to_string(c) + ", " +
                        std::to_string(q) + "], got " + ad::shape_str(cont.shape()));
    Tensor<Real> feats({c, q});
    for (std::size_t i = 0; i < c * q; ++i) feats[i] = static_cast<Real>(cont[i]);
    out = ad::add(out, ad::linear(feats, w_cont, Tensor<Real>()));
  }
  return out;
}

template <typename Real>
Tensor<Real> dynamic_embedding(const ad::IndexTensor& codes,
                               const std::vector<Tensor<Real>>& tables,
                               const LinearW<Real>& merge, const LinearW<Real>& conv,
                               std::size_t stride) {
  const std::size_t k = tables.size();
  if (k == 0) throw ConfigError("dynamic_embedding called without covariate tables");
  if (codes.shape.size() != 4 || codes.shape[3] != k)
    throw ConfigError("dynamic covariates must be [B, C, L, " + std::to_string(k) + "], got " +
                      ad::shape_str(codes.shape));
  const Shape lead(codes.shape.begin(), codes.shape.end() - 1);
  const std::size_t rows = ad::numel(lead);
  std::vector<Tensor<Real>> parts;
  parts.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    ad::IndexTensor idx(lead);
    const auto card = static_cast<std::int32_t>(tables[f].size(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const std::int32_t v = codes.data[r * k + f];
      if (v < 0 || v >= card)
        throw ConfigError("dynamic feature " + std::to_string(f) + ": code " + std::to_string(v) +
                          " outside [0, " + std::to_string(card) + ")");
      idx.data[r] = v;
    }
    parts.push_back(ad::embedding(tables[f], idx));
  }
  auto merged = ad::linear(k == 1 ? parts[0] : ad::concat_last(parts), merge.weight, merge.bias);
  return ad::depthwise_conv1d(merged, conv.weight, conv.bias, stride);
}

template <typename Real>
Tensor<Real> context_prior(const Tensor<Real>& e_patch, const Tensor<Real>* e_spatial,
                           const Tensor<Real>* e_dyn) {
  Tensor<Real> h = e_patch;
  if (e_spatial) {
    const std::size_t c = e_spatial->size(0), d = e_spatial->size(1);
    h = ad::add(h, ad::reshape(*e_spatial, {c, 1, d}));
  }
  if (e_dyn) h = ad::add(h, *e_dyn);
  return h;
}

template <typename Real>
Tensor<Real> temporal_attention(const Tensor<Real>& x, const AttentionW<Real>& w, Real dropout,
                                std::mt19937_64& rng, bool training, Tensor<Real>* weights_out) {
  const std::size_t d = x.shape().back();
  auto xn = ad::layer_norm(x, w.norm.gamma, w.norm.beta);
  auto q = ad::linear(xn, w.q.weight, w.q.bias);
  auto k = ad::linear(xn, w.k.weight, w.k.bias);
  auto v = ad::linear(xn, w.v.weight, w.v.bias);
  auto scores = ad::scale(ad::matmul(q, ad::transpose_last(k)),
                          Real(1) / std::sqrt(static_cast<Real>(d)));
  auto attn = ad::softmax(scores, -1);
  if (weights_out) *weights_out = attn.detach();
  auto ctx = ad::matmul(ad::dropout(attn, dropout, rng, training), v);
  return ad::add(x, ad::linear(ctx, w.o.weight, w.o.bias));
}

template <typename Real>
FmScores<Real> fm_scores(const Tensor<Real>& h0, const LinearW<Real>& fm) {
  const std::size_t r = fm.weight.size(1);
  auto v = ad::permute(ad::linear(h0, fm.weight, fm.bias), {0, 2, 1, 3});  // [B, N, C, r]
  FmScores<Real> out;
  out.scores = ad::gram(v);
  out.weights = ad::softmax(ad::scale(out.scores, Real(1) / std::sqrt(static_cast<Real>(r))), -1);
  return out;
}

template <typename Real>
Tensor<Real> spatial_projection(const Tensor<Real>& z, const LinearW<Real>& low,
                                const LinearW<Real>& high) {
  return ad::linear(ad::linear(z, low.weight, low.bias), high.weight, high.bias);
}

template <typename Real>
Tensor<Real> gated_fusion(const Tensor<Real>& z_temp, const Tensor<Real>& a_spatial,
                          const Tensor<Real>& v_spatial, const LinearW<Real>& gate,
                          Tensor<Real>* gate_out) {
  auto vp = ad::permute(v_spatial, {0, 2, 1, 3});                         // [B, N, C, D]
  auto z_sp = ad::permute(ad::matmul(a_spatial, vp), {0, 2, 1, 3});      // [B, C, N, D]
  auto g = ad::sigmoid(ad::linear(z_temp, gate.weight, gate.bias));
  if (gate_out) *gate_out = g.detach();
  return ad::add(z_sp, ad::mul(g, ad::sub(z_temp, z_sp)));
}

template <typename Real>
Tensor<Real> embedding_mlp(const Tensor<Real>& z, const MlpW<Real>& w, Real dropout,
                           std::mt19937_64& rng, bool training) {
  auto h = ad::gelu(ad::linear(ad::layer_norm(z, w.norm.gamma, w.norm.beta), w.fc1.weight, w.fc1.bias));
  return ad::add(z, ad::linear(ad::dropout(h, dropout, rng, training), w.fc2.weight, w.fc2.bias));
}

template <typename Real>
Tensor<Real> project_forecast(const Tensor<Real>& z, const LinearW<Real>& head) {
  if (z.dim() != 4) throw ad::DimensionError("project_forecast expects [B, C, N, D], got " + ad::shape_str(z.shape()));
  auto flat = ad::reshape(z, {z.size(0), z.size(1), z.size(2) * z.size(3)});
  return ad::linear(flat, head.weight, head.bias);
}

template <typename Real>
Tensor<Real> channel_scores_to_bccn(const Tensor<Real>& bncc) {
  ad::NoGradGuard<Real> guard;
  return ad::permute(bncc.detach(), {0, 2, 3, 1});
}

#define FACTR_INSTANTIATE_LAYERS(R)                                                                 \
  template std::pair<Tensor<R>, RevINState<R>> revin_normalize(const Tensor<R>&, const NormW<R>&); \
  template Tensor<R> revin_denormalize(const Tensor<R>&, const RevINState<R>&, const NormW<R>&);   \
  template Tensor<R> patchify_and_embed(const Tensor<R>&, std::size_t, std::size_t,                \
                                        const LinearW<R>&, const Tensor<R>&);                      \
  template Tensor<R> static_embedding(const Tensor<R>&, const std::vector<Tensor<R>>&,             \
                                      const Tensor<R>&, const StaticAttributes*);                  \
  template Tensor<R> dynamic_embedding(const ad::IndexTensor&, const std::vector<Tensor<R>>&,      \
                                       const LinearW<R>&, const LinearW<R>&, std::size_t);         \
  template Tensor<R> context_prior(const Tensor<R>&, const Tensor<R>*, const Tensor<R>*);          \
  template Tensor<R> temporal_attention(const Tensor<R>&, const AttentionW<R>&, R,                 \
                                        std::mt19937_64&, bool, Tensor<R>*);                       \
  template FmScores<R> fm_scores(const Tensor<R>&, const LinearW<R>&);                             \
  template Tensor<R> spatial_projection(const Tensor<R>&, const LinearW<R>&, const LinearW<R>&);   \
  template Tensor<R> gated_fusion(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,            \
                                  const LinearW<R>&, Tensor<R>*);                                  \
  template Tensor<R> embedding_mlp(const Tensor<R>&, const MlpW<R>&, R, std::mt19937_64&, bool);   \
  template Tensor<R> project_forecast(const Tensor<R>&, const LinearW<R>&);                        \
  template Tensor<R> channel_scores_to_bccn(const Tensor<R>&);

FACTR_INSTANTIATE_LAYERS(float)
FACTR_INSTANTIATE_LAYERS(double)

}  // namespace factr::model
