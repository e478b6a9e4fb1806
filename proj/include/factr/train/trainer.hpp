#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "factr/data/windows.hpp"
#include "factr/model/checkpoint.hpp"
#include "factr/model/model.hpp"
#include "factr/train/optim.hpp"

namespace factr::train {

enum class Objective { ForecastMse, MaskedReconstruction };

struct TrainConfig {
  double lr = 1e-4;
  AdamOptions adam;
  double rho = 0.0;
  std::size_t max_epochs = 150;
  std::size_t patience = 10;
  std::size_t t0 = 10;
  double t_mult = 2.0;
  double lr_min = 1e-6;
  std::uint64_t seed = 0;
  Objective objective = Objective::ForecastMse;
  double mask_ratio = 0.45;
  bool masked_only_loss = false;  // reconstruction loss on masked patches only

  void validate() const;
};

/// Non-finite loss or another failure inside the training loop.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  /// Tab-separated, header line first. The seconds column is wall time
  /// and therefore omitted when `with_seconds` is false.
  std::string tsv(bool with_seconds = true) const;
};

struct TrainResult {
  TrainingLog log;
  std::size_t best_epoch = 0;
  double best_val = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Supervised forecasting with SAM + Adam, per-epoch cosine restarts and
/// early stopping on validation MSE. The model ends holding the best
/// validation weights.
template <typename Real>
TrainResult train(model::FaCTRModel<Real>& model, data::BatchSource<Real>& train_data,
                  data::BatchSource<Real>& val_data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean validation loss for the configured objective without updating.
template <typename Real>
double validation_loss(model::FaCTRModel<Real>& model, data::BatchSource<Real>& data,
                       const TrainConfig& cfg, std::uint64_t mask_seed);

/// Masked-patch reconstruction. The model must be configured with
/// horizon == lookback; inputs are masked with cfg.mask_ratio and the
/// target is the unmasked window.
template <typename Real>
TrainResult pretrain_masked(model::FaCTRModel<Real>& model, data::BatchSource<Real>& train_data,
                            data::BatchSource<Real>& val_data, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

enum class TransferMode { Probe, Finetune };

struct TransferOptions {
  TransferMode mode = TransferMode::Probe;
  std::size_t probe_epochs = 10;
  std::size_t finetune_epochs = 20;
};

struct TransferResult {
  TrainResult probe;
  std::optional<TrainResult> finetune;
};

/// Loads every non-head tensor of `pretrained` into `model` (whose head is
/// freshly initialised for the target horizon), trains the head alone and,
/// for fine-tuning, then trains everything.
template <typename Real>
TransferResult transfer_train(model::FaCTRModel<Real>& model, const model::Checkpoint& pretrained,
                              data::BatchSource<Real>& train_data, data::BatchSource<Real>& val_data,
                              const TrainConfig& cfg, const TransferOptions& opts,
                              const EpochCallback& on_epoch = {});

/// Checks that a pretrained encoder can be transplanted into `target`.
void check_transfer_compatible(const model::ModelConfig& pretrained, const model::ModelConfig& target);

}  // namespace factr::train
