#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace factr::model {

/// Ablation ladder. Each step adds components on top of the previous one.
enum class Variant { TemporalOnly, PlusFm, Full };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct ModelConfig {
  std::size_t lookback = 512;  // L
  std::size_t patch = 32;      // P
  std::size_t stride = 32;     // S
  std::size_t d_model = 32;    // D
  std::size_t r_fm = 8;
  std::size_t r_sp = 8;
  std::size_t channels = 7;    // C
  std::size_t horizon = 96;    // T
  std::vector<std::size_t> dynamic_cardinalities;  // K tables
  std::vector<std::size_t> static_cardinalities;   // M tables
  std::size_t static_continuous = 0;               // Q
  double dropout = 0.1;
  Variant variant = Variant::Full;
  bool truncate_front = false;  // drop leading steps when (L - P) % S != 0
  std::uint64_t seed = 0;       // init and dropout stream

  std::size_t num_patches() const;      // N
  std::size_t effective_lookback() const;  // L after front truncation
  std::size_t k() const { return dynamic_cardinalities.size(); }
  std::size_t m() const { return static_cardinalities.size(); }
  bool uses_channel_mixing() const { return variant != Variant::TemporalOnly; }
  bool uses_mlp() const { return variant == Variant::Full; }

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

}  // namespace factr::model
