#include "factr/model/model.hpp"

#include <cmath>

#include "factr/common/errors.hpp"
#include "factr/common/random.hpp"

namespace factr::model {

using ad::Shape;

template <typename Real>
Tensor<Real>& ParamStore<Real>::add(const std::string& name, Tensor<Real> t) {
  if (index_.count(name)) throw IntegrityError("duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

template <typename Real>
Tensor<Real>& ParamStore<Real>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw IntegrityError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

template <typename Real>
const Tensor<Real>& ParamStore<Real>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IntegrityError("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

template <typename Real>
std::size_t ParamStore<Real>::total_numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

ParamCount count_params(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model, n = c.num_patches(), p = c.patch;
  ParamCount out;
  auto put = [&](const std::string& name, std::size_t v) {
    out.breakdown.emplace_back(name, v);
    out.total += v;
  };
  put("revin.gamma", c.channels);
  put("revin.beta", c.channels);
  put("patch.weight", p * d);
  put("patch.bias", d);
  put("pos", n * d);
  if (c.uses_channel_mixing()) {
    put("static.channel_id", c.channels * d);
    for (std::size_t m = 0; m < c.m(); ++m) put("static.cat." + std::to_string(m), c.static_cardinalities[m] * d);
    if (c.static_continuous > 0) put("static.cont", c.static_continuous * d);
    if (c.k() > 0) {
      for (std::size_t k = 0; k < c.k(); ++k) put("dyn.table." + std::to_string(k), c.dynamic_cardinalities[k] * d);
      put("dyn.merge.weight", c.k() * d * d);
      put("dyn.merge.bias", d);
      put("dyn.conv.weight", d * p);
      put("dyn.conv.bias", d);
    }
  }
  put("temporal.norm.gamma", d);
  put("temporal.norm.beta", d);
  for (const char* proj : {"q", "k", "v", "o"}) {
    put(std::string("temporal.") + proj + ".weight", d * d);
    put(std::string("temporal.") + proj + ".bias", d);
  }
  if (c.uses_channel_mixing()) {
    put("fm.weight", d * c.r_fm);
    put("fm.bias", c.r_fm);
    put("spatial.low.weight", d * c.r_sp);
    put("spatial.low.bias", c.r_sp);
    put("spatial.high.weight", c.r_sp * d);
    put("spatial.high.bias", d);
    put("gate.weight", d * d);
    put("gate.bias", d);
  }
  if (c.uses_mlp()) {
    put("mlp.norm.gamma", d);
    put("mlp.norm.beta", d);
    put("mlp.fc1.weight", d * 4 * d);
    put("mlp.fc1.bias", 4 * d);
    put("mlp.fc2.weight", 4 * d * d);
    put("mlp.fc2.bias", d);
  }
  put("head.weight", n * d * c.horizon);
  put("head.bias", c.horizon);
  return out;
}

template <typename Real>
ParamCount enumerate_params(const ParamStore<Real>& params) {
  ParamCount out;
  for (const auto& [name, t] : params.entries()) {
    out.breakdown.emplace_back(name, t.numel());
    out.total += t.numel();
  }
  return out;
}

template <typename Real>
FaCTRModel<Real>::FaCTRModel(ModelConfig config)
    : config_(std::move(config)), dropout_rng_(config_.seed ^ 0x9E3779B97F4A7C15ULL) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.d_model, n = c.num_patches(), p = c.patch;
  std::mt19937_64 rng(c.seed);

  auto glorot = [&](const std::string& name, std::size_t in, std::size_t out) {
    Tensor<Real> t({in, out});
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : t.data()) v = static_cast<Real>(rnd::uniform(rng, -limit, limit));
    params_.add(name, t);
  };
  auto table = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor<Real> t({rows, cols});
    for (auto& v : t.data()) v = static_cast<Real>(rnd::normal(rng, 0.0, 0.02));
    params_.add(name, t);
  };
  auto fill = [&](const std::string& name, std::size_t len, Real value) {
    params_.add(name, Tensor<Real>({len}, value));
  };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    glorot(prefix + ".weight", in, out);
    fill(prefix + ".bias", out, Real(0));
  };

  fill("revin.gamma", c.channels, Real(1));
  fill("revin.beta", c.channels, Real(0));
  linear("patch", p, d);
  table("pos", n, d);
  if (c.uses_channel_mixing()) {
    table("static.channel_id", c.channels, d);
    for (std::size_t m = 0; m < c.m(); ++m)
      table("static.cat." + std::to_string(m), c.static_cardinalities[m], d);
    if (c.static_continuous > 0) glorot("static.cont", c.static_continuous, d);
    if (c.k() > 0) {
      for (std::size_t k = 0; k < c.k(); ++k)
        table("dyn.table." + std::to_string(k), c.dynamic_cardinalities[k], d);
      linear("dyn.merge", c.k() * d, d);
      params_.add("dyn.conv.weight", Tensor<Real>({d, p}, Real(1) / static_cast<Real>(p)));
      fill("dyn.conv.bias", d, Real(0));
    }
  }
  fill("temporal.norm.gamma", d, Real(1));
  fill("temporal.norm.beta", d, Real(0));
  for (const char* proj : {"q", "k", "v", "o"}) linear(std::string("temporal.") + proj, d, d);
  if (c.uses_channel_mixing()) {
    linear("fm", d, c.r_fm);
    linear("spatial.low", d, c.r_sp);
    linear("spatial.high", c.r_sp, d);
    linear("gate", d, d);
  }
  if (c.uses_mlp()) {
    fill("mlp.norm.gamma", d, Real(1));
    fill("mlp.norm.beta", d, Real(0));
    linear("mlp.fc1", d, 4 * d);
    linear("mlp.fc2", 4 * d, d);
  }
  linear("head", n * d, c.horizon);
}

template <typename Real>
LinearW<Real> FaCTRModel<Real>::lin(const std::string& prefix, bool bias) const {
  return {params_.at(prefix + ".weight"), bias ? params_.at(prefix + ".bias") : Tensor<Real>()};
}

template <typename Real>
NormW<Real> FaCTRModel<Real>::norm(const std::string& prefix) const {
  return {params_.at(prefix + ".gamma"), params_.at(prefix + ".beta")};
}

template <typename Real>
void FaCTRModel<Real>::set_trainable(const std::vector<std::string>& prefixes) {
  for (auto& [name, t] : params_.entries()) {
    bool on = prefixes.empty();
    for (const auto& pre : prefixes)
      if (name.rfind(pre, 0) == 0) on = true;
    t.set_requires_grad(on);
    if (!on) t.zero_grad();
  }
}

template <typename Real>
ForwardOutput<Real> FaCTRModel<Real>::forward(const Tensor<Real>& x, const ad::IndexTensor* dynamic,
                                              const ForwardOptions& opts) {
  ForwardInputs<Real> in;
  in.x = &x;
  in.dynamic = dynamic;
  return forward(in, opts);
}

template <typename Real>
ForwardOutput<Real> FaCTRModel<Real>::forward(const ForwardInputs<Real>& in,
                                              const ForwardOptions& opts) {
  const auto& c = config_;
  if (!in.x) throw ConfigError("forward: no input tensor");
  const Tensor<Real>& x_raw = *in.x;
  if (x_raw.dim() != 3 || x_raw.size(1) != c.channels || x_raw.size(2) != c.lookback)
    throw ConfigError("forward: input " + ad::shape_str(x_raw.shape()) + " does not match [B, " +
                      std::to_string(c.channels) + ", " + std::to_string(c.lookback) + "]");
  const std::size_t drop = c.lookback - c.effective_lookback();
  const Real p = static_cast<Real>(c.dropout);
  const bool mixing = c.uses_channel_mixing();

  const NormW<Real> revin = norm("revin");
  auto [x, state] = revin_normalize(x_raw, revin);
  if (drop > 0) x = ad::slice_last(x, drop, c.effective_lookback());

  auto e_patch = patchify_and_embed(x, c.patch, c.stride, lin("patch"), params_.at("pos"));

  ForwardOutput<Real> out;
  InterpretabilityDump<Real> dump;
  auto z = temporal_attention(e_patch, AttentionW<Real>{norm("temporal.norm"), lin("temporal.q"),
                                                        lin("temporal.k"), lin("temporal.v"),
                                                        lin("temporal.o")},
                              p, dropout_rng_, opts.training, opts.dump ? &dump.temporal : nullptr);

  if (mixing) {
    std::vector<Tensor<Real>> cat_tables;
    for (std::size_t m = 0; m < c.m(); ++m) cat_tables.push_back(params_.at("static.cat." + std::to_string(m)));
    const StaticAttributes* statics = in.statics ? in.statics : (statics_ ? &*statics_ : nullptr);
    auto e_spatial = static_embedding(params_.at("static.channel_id"), cat_tables,
                                      c.static_continuous > 0 ? params_.at("static.cont") : Tensor<Real>(),
                                      statics);
    std::optional<Tensor<Real>> e_dyn;
    if (c.k() > 0) {
      if (!in.dynamic)
        throw ConfigError("model was configured with " + std::to_string(c.k()) +
                          " dynamic covariates but none were supplied");
      const ad::IndexTensor* codes = in.dynamic;
      ad::IndexTensor trimmed;
      if (codes->shape.size() != 4 || codes->shape[2] != c.lookback ||
          (codes->shape[1] != 1 && codes->shape[1] != c.channels) || codes->shape[0] != x_raw.size(0))
        throw ConfigError("dynamic covariates " + ad::shape_str(codes->shape) + " do not match input " +
                          ad::shape_str(x_raw.shape()));
      if (drop > 0) {
        Shape s = codes->shape;
        s[2] = c.effective_lookback();
        trimmed = ad::IndexTensor(s);
        const std::size_t k = s[3], rows = s[0] * s[1];
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(codes->data.begin() + static_cast<std::ptrdiff_t>((r * c.lookback + drop) * k),
                      s[2] * k, trimmed.data.begin() + static_cast<std::ptrdiff_t>(r * s[2] * k));
        codes = &trimmed;
      }
      std::vector<Tensor<Real>> tables;
      for (std::size_t k = 0; k < c.k(); ++k) tables.push_back(params_.at("dyn.table." + std::to_string(k)));
      e_dyn = dynamic_embedding(*codes, tables, lin("dyn.merge"), lin("dyn.conv"), c.stride);
    }
    auto h0 = context_prior(e_patch, &e_spatial, e_dyn ? &*e_dyn : nullptr);
    auto fm = fm_scores(h0, lin("fm"));
    auto v_sp = spatial_projection(z, lin("spatial.low"), lin("spatial.high"));
    z = gated_fusion(z, fm.weights, v_sp, lin("gate"), opts.dump ? &dump.gate.emplace() : nullptr);
    if (opts.dump) {
      dump.fm_scores = channel_scores_to_bccn(fm.scores);
      dump.spatial = channel_scores_to_bccn(fm.weights);
    }
  }
  if (c.uses_mlp())
    z = embedding_mlp(z, MlpW<Real>{norm("mlp.norm"), lin("mlp.fc1"), lin("mlp.fc2")}, p,
                      dropout_rng_, opts.training);

  out.forecast = revin_denormalize(project_forecast(z, lin("head")), state, revin);
  if (opts.dump) out.dump = std::move(dump);
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class FaCTRModel<float>;
template class FaCTRModel<double>;
template ParamCount enumerate_params(const ParamStore<float>&);
template ParamCount enumerate_params(const ParamStore<double>&);

}  // namespace factr::model
