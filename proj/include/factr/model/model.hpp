#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "factr/model/config.hpp"
#include "factr/model/layers.hpp"

namespace factr::model {

/// Ordered, name-addressed set of learnable tensors. Insertion order is the
/// canonical enumeration order used by checkpoints and optimisers.
template <typename Real>
class ParamStore {
 public:
  Tensor<Real>& add(const std::string& name, Tensor<Real> t);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<Real>& at(const std::string& name);
  const Tensor<Real>& at(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor<Real>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<Real>>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_numel() const;

 private:
  std::vector<std::pair<std::string, Tensor<Real>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Named tensor counts, analytic or enumerated.
struct ParamCount {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> breakdown;
};

/// Closed-form inventory for a configuration, in enumeration order.
ParamCount count_params(const ModelConfig& config);

template <typename Real>
ParamCount enumerate_params(const ParamStore<Real>& params);

template <typename Real>
struct ForwardInputs {
  const Tensor<Real>* x = nullptr;              // [B, C, L]
  const ad::IndexTensor* dynamic = nullptr;     // [B, 1 | C, L, K]
  const StaticAttributes* statics = nullptr;
};

struct ForwardOptions {
  bool training = false;
  bool dump = false;  // keep attention maps
};

template <typename Real>
struct InterpretabilityDump {
  Tensor<Real> temporal;                  // [B, C, N, N]
  std::optional<Tensor<Real>> fm_scores;  // [B, C, C, N], raw inner products
  std::optional<Tensor<Real>> spatial;    // [B, C, C, N], softmax over the source axis
  std::optional<Tensor<Real>> gate;       // [B, C, N, D]
};

template <typename Real>
struct ForwardOutput {
  Tensor<Real> forecast;  // [B, C, T] in the input scale
  std::optional<InterpretabilityDump<Real>> dump;
};

template <typename Real>
class FaCTRModel {
 public:
  /// Builds and initialises every tensor the variant uses.
  explicit FaCTRModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  ForwardOutput<Real> forward(const ForwardInputs<Real>& in, const ForwardOptions& opts = {});
  ForwardOutput<Real> forward(const Tensor<Real>& x, const ad::IndexTensor* dynamic = nullptr,
                              const ForwardOptions& opts = {});

  /// Static attributes used when a forward call does not pass its own.
  void set_static_attributes(std::optional<StaticAttributes> attrs) { statics_ = std::move(attrs); }
  const std::optional<StaticAttributes>& static_attributes() const { return statics_; }

  /// Reseeds the dropout stream.
  void reseed(std::uint64_t seed) { dropout_rng_.seed(seed); }

  /// Only tensors whose name starts with one of the prefixes keep
  /// requires_grad; an empty list unfreezes everything.
  void set_trainable(const std::vector<std::string>& prefixes);

 private:
  LinearW<Real> lin(const std::string& prefix, bool bias = true) const;
  NormW<Real> norm(const std::string& prefix) const;

  ModelConfig config_;
  ParamStore<Real> params_;
  std::optional<StaticAttributes> statics_;
  std::mt19937_64 dropout_rng_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class FaCTRModel<float>;
extern template class FaCTRModel<double>;

}  // namespace factr::model
