#include "factr/model/config.hpp"

#include "factr/common/errors.hpp"

namespace factr::model {

Variant parse_variant(const std::string& name) {
  if (name == "temporal-only") return Variant::TemporalOnly;
  if (name == "plus-fm") return Variant::PlusFm;
  if (name == "full") return Variant::Full;
  throw ConfigError("unknown variant '" + name + "' (expected temporal-only, plus-fm or full)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::TemporalOnly: return "temporal-only";
    case Variant::PlusFm: return "plus-fm";
    case Variant::Full: return "full";
  }
  return "full";
}

std::size_t ModelConfig::effective_lookback() const {
  if (lookback < patch || stride == 0) return lookback;
  return lookback - (lookback - patch) % stride;
}

std::size_t ModelConfig::num_patches() const {
  if (lookback < patch || stride == 0) return 0;
  return (lookback - patch) / stride + 1;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (lookback == 0 || patch == 0 || stride == 0 || d_model == 0 || channels == 0 || horizon == 0)
    fail("lookback, patch_len, stride, d_model, channels and horizon must be positive");
  if (r_fm == 0) fail("r_fm must be at least 1");
  if (r_sp == 0) fail("r_sp must be at least 1");
  if (patch > lookback)
    fail("patch_len " + std::to_string(patch) + " exceeds lookback " + std::to_string(lookback));
  if ((lookback - patch) % stride != 0 && !truncate_front)
    fail("lookback " + std::to_string(lookback) + " minus patch_len " + std::to_string(patch) +
         " is not divisible by stride " + std::to_string(stride) +
         " (enable truncate_front to drop leading steps)");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  for (std::size_t i = 0; i < dynamic_cardinalities.size(); ++i)
    if (dynamic_cardinalities[i] == 0) fail("dynamic feature " + std::to_string(i) + " has cardinality 0");
  for (std::size_t i = 0; i < static_cardinalities.size(); ++i)
    if (static_cardinalities[i] == 0) fail("static attribute " + std::to_string(i) + " has cardinality 0");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"lookback", lookback},
                        {"patch_len", patch},
                        {"stride", stride},
                        {"d_model", d_model},
                        {"r_fm", r_fm},
                        {"r_sp", r_sp},
                        {"channels", channels},
                        {"horizon", horizon},
                        {"dynamic_cardinalities", dynamic_cardinalities},
                        {"static_cardinalities", static_cardinalities},
                        {"static_continuous", static_continuous},
                        {"dropout", dropout},
                        {"variant", variant_name(variant)},
                        {"truncate_front", truncate_front},
                        {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.lookback = j.at("lookback").get<std::size_t>();
    c.patch = j.at("patch_len").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.r_fm = j.at("r_fm").get<std::size_t>();
    c.r_sp = j.at("r_sp").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.dynamic_cardinalities = j.at("dynamic_cardinalities").get<std::vector<std::size_t>>();
    c.static_cardinalities = j.at("static_cardinalities").get<std::vector<std::size_t>>();
    c.static_continuous = j.at("static_continuous").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.truncate_front = j.at("truncate_front").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace factr::model
