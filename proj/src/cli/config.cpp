#include "factr/cli/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <utility>

#include "factr/common/errors.hpp"

namespace factr::cli {
namespace {

using json = nlohmann::json;
using Setter = std::function<void(RunConfig&, const json&)>;

[[noreturn]] void bad(const std::string& key, const std::string& what, const json& v) {
  throw ConfigError("config key '" + key + "': expected " + what + ", got " + v.dump());
}

std::size_t as_count(const std::string& key, const json& v) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad(key, "a non-negative integer", v);
  return v.get<std::size_t>();
}

double as_number(const std::string& key, const json& v) {
  if (!v.is_number()) bad(key, "a number", v);
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad(key, "true or false", v);
  return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "a string", v);
  return v.get<std::string>();
}

std::vector<std::size_t> as_counts(const std::string& key, const json& v) {
  if (!v.is_array()) bad(key, "an array of non-negative integers", v);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_count(key + "[" + std::to_string(i) + "]", v[i]));
  return out;
}

std::vector<double> as_numbers(const std::string& key, const json& v) {
  if (!v.is_array()) bad(key, "an array of numbers", v);
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(key + "[" + std::to_string(i) + "]", v[i]));
  return out;
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"data", [](RunConfig& c, const json& v) { c.data = as_string("data", v); }},
      {"frequency", [](RunConfig& c, const json& v) { c.frequency = as_string("frequency", v); }},
      {"split", [](RunConfig& c, const json& v) { c.split = as_string("split", v); }},
      {"split_sizes", [](RunConfig& c, const json& v) { c.split_sizes = as_numbers("split_sizes", v); }},
      {"calendar", [](RunConfig& c, const json& v) { c.calendar = as_bool("calendar", v); }},
      {"precision",
       [](RunConfig& c, const json& v) {
         const auto p = as_string("precision", v);
         if (p == "float32") c.precision = Precision::Float32;
         else if (p == "float64") c.precision = Precision::Float64;
         else bad("precision", "\"float32\" or \"float64\"", v);
       }},
      {"batch", [](RunConfig& c, const json& v) { c.batch = as_count("batch", v); }},
      {"lookback", [](RunConfig& c, const json& v) { c.model.lookback = as_count("lookback", v); }},
      {"patch_len", [](RunConfig& c, const json& v) { c.model.patch = as_count("patch_len", v); }},
      {"stride", [](RunConfig& c, const json& v) { c.model.stride = as_count("stride", v); }},
      {"d_model", [](RunConfig& c, const json& v) { c.model.d_model = as_count("d_model", v); }},
      {"r_fm", [](RunConfig& c, const json& v) { c.model.r_fm = as_count("r_fm", v); }},
      {"r_sp", [](RunConfig& c, const json& v) { c.model.r_sp = as_count("r_sp", v); }},
      {"channels", [](RunConfig& c, const json& v) { c.model.channels = as_count("channels", v); }},
      {"horizon", [](RunConfig& c, const json& v) { c.model.horizon = as_count("horizon", v); }},
      {"static_cardinalities",
       [](RunConfig& c, const json& v) { c.model.static_cardinalities = as_counts("static_cardinalities", v); }},
      {"static_continuous",
       [](RunConfig& c, const json& v) { c.model.static_continuous = as_count("static_continuous", v); }},
      {"dropout", [](RunConfig& c, const json& v) { c.model.dropout = as_number("dropout", v); }},
      {"variant",
       [](RunConfig& c, const json& v) {
         try {
           c.model.variant = model::parse_variant(as_string("variant", v));
         } catch (const ConfigError& e) {
           throw ConfigError(std::string("config key 'variant': ") + e.what());
         }
       }},
      {"truncate_front", [](RunConfig& c, const json& v) { c.model.truncate_front = as_bool("truncate_front", v); }},
      {"lr", [](RunConfig& c, const json& v) { c.train.lr = as_number("lr", v); }},
      {"adam_beta1", [](RunConfig& c, const json& v) { c.train.adam.beta1 = as_number("adam_beta1", v); }},
      {"adam_beta2", [](RunConfig& c, const json& v) { c.train.adam.beta2 = as_number("adam_beta2", v); }},
      {"adam_eps", [](RunConfig& c, const json& v) { c.train.adam.eps = as_number("adam_eps", v); }},
      {"rho", [](RunConfig& c, const json& v) { c.train.rho = as_number("rho", v); }},
      {"max_epochs", [](RunConfig& c, const json& v) { c.train.max_epochs = as_count("max_epochs", v); }},
      {"patience", [](RunConfig& c, const json& v) { c.train.patience = as_count("patience", v); }},
      {"t0", [](RunConfig& c, const json& v) { c.train.t0 = as_count("t0", v); }},
      {"t_mult", [](RunConfig& c, const json& v) { c.train.t_mult = as_number("t_mult", v); }},
      {"lr_min", [](RunConfig& c, const json& v) { c.train.lr_min = as_number("lr_min", v); }},
      {"mask_ratio", [](RunConfig& c, const json& v) { c.train.mask_ratio = as_number("mask_ratio", v); }},
      {"masked_only_loss",
       [](RunConfig& c, const json& v) { c.train.masked_only_loss = as_bool("masked_only_loss", v); }},
      {"probe_epochs", [](RunConfig& c, const json& v) { c.probe_epochs = as_count("probe_epochs", v); }},
      {"finetune_epochs", [](RunConfig& c, const json& v) { c.finetune_epochs = as_count("finetune_epochs", v); }},
      {"raw_metrics", [](RunConfig& c, const json& v) { c.raw_metrics = as_bool("raw_metrics", v); }},
      {"top_channels", [](RunConfig& c, const json& v) { c.top_channels = as_count("top_channels", v); }},
      {"windows", [](RunConfig& c, const json& v) { c.windows = as_counts("windows", v); }},
      {"seed",
       [](RunConfig& c, const json& v) {
         if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
           bad("seed", "a non-negative integer", v);
         c.set_seed(v.get<std::uint64_t>());
         c.seed_given = true;
       }},
  };
  return table;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError("config key '" + key + "': " + msg);
  };
  if (c.split != "auto" && c.split != "ratio" && c.split != "months")
    fail("split", "expected \"auto\", \"ratio\" or \"months\", got \"" + c.split + "\"");
  if (!c.split_sizes.empty() && c.split_sizes.size() != 3)
    fail("split_sizes", "needs exactly three entries (train, val, test)");
  for (double s : c.split_sizes)
    if (!(s >= 0)) fail("split_sizes", "entries must be non-negative");
  if (c.batch == 0) fail("batch", "must be at least 1");
  try {
    data::Frequency::parse(c.frequency);
  } catch (const std::exception& e) {
    fail("frequency", e.what());
  }
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    c.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.train.adam.beta1 < 0 || c.train.adam.beta1 >= 1) fail("adam_beta1", "must lie in [0, 1)");
  if (c.train.adam.beta2 < 0 || c.train.adam.beta2 >= 1) fail("adam_beta2", "must lie in [0, 1)");
  if (!(c.train.adam.eps > 0)) fail("adam_eps", "must be positive");
}

}  // namespace

data::SplitSpec RunConfig::split_spec() const {
  std::string mode = split;
  if (mode == "auto") {
    const auto stem = std::filesystem::path(data).filename().string();
    mode = stem.rfind("ETT", 0) == 0 ? "months" : "ratio";
  }
  if (mode == "months") {
    if (split_sizes.empty()) return data::SplitSpec::months(12, 4, 4);
    return data::SplitSpec::months(split_sizes[0], split_sizes[1], split_sizes[2]);
  }
  if (split_sizes.empty()) return data::SplitSpec::ratio(0.7, 0.1, 0.2);
  return data::SplitSpec::ratio(split_sizes[0], split_sizes[1], split_sizes[2]);
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  train.seed = s;
}

nlohmann::json RunConfig::to_json() const {
  json j = model.to_json();
  j.erase("dynamic_cardinalities");
  j["data"] = data;
  j["frequency"] = frequency;
  j["split"] = split;
  j["split_sizes"] = split_sizes;
  j["calendar"] = calendar;
  j["precision"] = precision == Precision::Float32 ? "float32" : "float64";
  j["batch"] = batch;
  j["lr"] = train.lr;
  j["adam_beta1"] = train.adam.beta1;
  j["adam_beta2"] = train.adam.beta2;
  j["adam_eps"] = train.adam.eps;
  j["rho"] = train.rho;
  j["max_epochs"] = train.max_epochs;
  j["patience"] = train.patience;
  j["t0"] = train.t0;
  j["t_mult"] = train.t_mult;
  j["lr_min"] = train.lr_min;
  j["mask_ratio"] = train.mask_ratio;
  j["masked_only_loss"] = train.masked_only_loss;
  j["probe_epochs"] = probe_epochs;
  j["finetune_epochs"] = finetune_epochs;
  j["raw_metrics"] = raw_metrics;
  j["top_channels"] = top_channels;
  j["windows"] = windows;
  j["seed"] = seed;
  return j;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto& table = setters();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
    if (it == table.end()) throw ConfigError("config key '" + key + "': unknown key");
    it->second(c, value);
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace factr::cli
