#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "factr/data/dataset.hpp"
#include "factr/data/split.hpp"
#include "factr/model/config.hpp"
#include "factr/train/trainer.hpp"

namespace factr::cli {

enum class Precision { Float32, Float64 };

/// Everything one run needs. Read from a flat JSON object; see README for
/// the key list.
struct RunConfig {
  std::string data;                 // CSV path
  std::string frequency = "h";
  std::string split = "auto";       // auto | ratio | months
  std::vector<double> split_sizes;  // empty: 12/4/4 months or 0.7/0.1/0.2
  bool calendar = true;             // calendar covariates when timestamps exist
  Precision precision = Precision::Float32;
  std::size_t batch = 32;
  model::ModelConfig model;
  train::TrainConfig train;
  std::size_t probe_epochs = 10;
  std::size_t finetune_epochs = 20;
  bool raw_metrics = false;
  std::size_t top_channels = 10;
  std::vector<std::size_t> windows = {0};  // inspect / dump targets
  std::uint64_t seed = 0;
  bool seed_given = false;

  /// Split actually used for a dataset file name (auto resolves to 12/4/4
  /// months for ETT files and 7:1:2 otherwise).
  data::SplitSpec split_spec() const;

  /// Sets the seed of the model, the trainer and the window shuffle.
  void set_seed(std::uint64_t s);

  nlohmann::json to_json() const;
};

/// Defaults overlaid with the keys of `j`. Unknown keys, wrong types and
/// violated invariants raise ConfigError naming the key.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// Every key parse_config accepts.
const std::vector<std::string>& config_keys();

}  // namespace factr::cli
