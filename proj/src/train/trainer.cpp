#include "factr/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "factr/common/errors.hpp"
#include "factr/data/masking.hpp"

namespace factr::train {
namespace {

constexpr std::uint64_t kValMaskSalt = 0x5DEECE66DULL;

template <typename Real>
using BatchLoss = std::function<Tensor<Real>(const data::WindowBatch<Real>&, bool training,
                                             std::mt19937_64& mask_rng)>;

template <typename Real>
Tensor<Real> masked_mse(const Tensor<Real>& pred, const Tensor<Real>& target,
                        const ad::IndexTensor& flags, std::size_t patch) {
  Tensor<Real> weight(pred.shape());
  const std::size_t l = pred.size(2), n = l / patch;
  std::size_t count = 0;
  for (std::size_t row = 0; row < pred.size(0) * pred.size(1); ++row)
    for (std::size_t p = 0; p < n; ++p)
      if (flags.data[row * n + p]) {
        for (std::size_t k = 0; k < patch; ++k) weight[row * l + p * patch + k] = Real(1);
        count += patch;
      }
  auto d = ad::sub(pred, target);
  auto s = ad::sum(ad::mul(ad::mul(d, d), weight));
  return ad::scale(s, Real(1) / static_cast<Real>(std::max<std::size_t>(count, 1)));
}

template <typename Real>
BatchLoss<Real> forecast_loss(model::FaCTRModel<Real>& model) {
  return [&model](const data::WindowBatch<Real>& b, bool training, std::mt19937_64&) {
    model::ForwardOptions fo;
    fo.training = training;
    auto pred = model.forward(b.inputs, b.dyn ? &*b.dyn : nullptr, fo).forecast;
    return mse_loss(pred, b.targets);
  };
}

template <typename Real>
BatchLoss<Real> reconstruction_loss(model::FaCTRModel<Real>& model, const TrainConfig& cfg) {
  const auto& mc = model.config();
  if (mc.horizon != mc.lookback)
    throw ConfigError("masked pretraining needs horizon == lookback (" + std::to_string(mc.lookback) +
                      "), model has horizon " + std::to_string(mc.horizon));
  if (mc.stride != mc.patch)
    throw ConfigError("masked pretraining needs non-overlapping patches (stride == patch_len)");
  return [&model, cfg](const data::WindowBatch<Real>& b, bool training, std::mt19937_64& rng) {
    const std::size_t patch = model.config().patch;
    auto [masked, flags] = data::mask_patches(b.inputs, patch, cfg.mask_ratio, rng);
    model::ForwardOptions fo;
    fo.training = training;
    auto pred = model.forward(masked, b.dyn ? &*b.dyn : nullptr, fo).forecast;
    if (cfg.masked_only_loss) return masked_mse(pred, b.inputs, flags, patch);
    return mse_loss(pred, b.inputs);
  };
}

template <typename Real>
double mean_loss(const BatchLoss<Real>& loss_fn, data::BatchSource<Real>& src, std::uint64_t mask_seed) {
  ad::NoGradGuard<Real> guard;
  std::mt19937_64 rng(mask_seed);
  src.start_epoch();
  data::WindowBatch<Real> b;
  double total = 0;
  std::size_t n = 0;
  while (src.next(b)) {
    const double l = static_cast<double>(loss_fn(b, false, rng).item());
    total += l * static_cast<double>(b.size());
    n += b.size();
  }
  if (n == 0) throw TrainingError("validation stream produced no windows");
  return total / static_cast<double>(n);
}

template <typename Real>
TrainResult run_epochs(model::FaCTRModel<Real>& model, data::BatchSource<Real>& train_data,
                       data::BatchSource<Real>& val_data, const TrainConfig& cfg,
                       const BatchLoss<Real>& loss_fn, const EpochCallback& on_epoch) {
  cfg.validate();
  auto& params = model.params().entries();
  Adam<Real> adam(cfg.adam);
  std::mt19937_64 mask_rng(cfg.seed);
  TrainResult res;
  res.best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<Real>> best(params.size());
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    const double lr = cosine_warm_restart_lr(epoch, cfg.t0, cfg.t_mult, cfg.lr, cfg.lr_min);
    train_data.start_epoch();
    data::WindowBatch<Real> batch;
    double total = 0;
    std::size_t seen = 0, index = 0;
    while (train_data.next(batch)) {
      auto info = sam_step<Real>(
          params, [&] { return loss_fn(batch, true, mask_rng); }, cfg.rho, adam, lr);
      if (!std::isfinite(info.loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(index));
      total += info.loss * static_cast<double>(batch.size());
      seen += batch.size();
      ++index;
    }
    if (seen == 0) throw TrainingError("training stream produced no windows");

    const double val = mean_loss(loss_fn, val_data, cfg.seed ^ kValMaskSalt);
    if (!std::isfinite(val))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = total / static_cast<double>(seen);
    rec.val_loss = val;
    rec.lr = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    res.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val < res.best_val) {
      res.best_val = val;
      res.best_epoch = rec.epoch;
      stale = 0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto d = params[k].second.data();
        best[k].assign(d.begin(), d.end());
      }
    } else if (++stale >= cfg.patience) {
      res.stopped_early = epoch + 1 < cfg.max_epochs;
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (best[k].empty()) continue;
    std::copy(best[k].begin(), best[k].end(), params[k].second.data().begin());
    params[k].second.zero_grad();
  }
  return res;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(rho >= 0)) throw ConfigError("rho must be non-negative");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (t0 == 0 || t_mult < 1) throw ConfigError("scheduler needs t0 >= 1 and t_mult >= 1");
  if (!(lr_min >= 0) || lr_min > lr) throw ConfigError("lr_min must lie in [0, lr]");
  if (!(mask_ratio > 0 && mask_ratio < 1)) throw ConfigError("mask_ratio must lie in (0, 1)");
}

std::string TrainingLog::tsv(bool with_seconds) const {
  std::string out = with_seconds ? "epoch\ttrain_loss\tval_loss\tlr\tseconds\n"
                                 : "epoch\ttrain_loss\tval_loss\tlr\n";
  char buf[160];
  for (const auto& e : epochs) {
    if (with_seconds)
      std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.3f\n", e.epoch, e.train_loss,
                    e.val_loss, e.lr, e.seconds);
    else
      std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\n", e.epoch, e.train_loss,
                    e.val_loss, e.lr);
    out += buf;
  }
  return out;
}

template <typename Real>
TrainResult train(model::FaCTRModel<Real>& model, data::BatchSource<Real>& train_data,
                  data::BatchSource<Real>& val_data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  const auto loss = cfg.objective == Objective::ForecastMse ? forecast_loss(model)
                                                            : reconstruction_loss(model, cfg);
  return run_epochs(model, train_data, val_data, cfg, loss, on_epoch);
}

template <typename Real>
double validation_loss(model::FaCTRModel<Real>& model, data::BatchSource<Real>& src,
                       const TrainConfig& cfg, std::uint64_t mask_seed) {
  const auto loss = cfg.objective == Objective::ForecastMse ? forecast_loss(model)
                                                            : reconstruction_loss(model, cfg);
  return mean_loss(loss, src, mask_seed);
}

template <typename Real>
TrainResult pretrain_masked(model::FaCTRModel<Real>& model, data::BatchSource<Real>& train_data,
                            data::BatchSource<Real>& val_data, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  TrainConfig c = cfg;
  c.objective = Objective::MaskedReconstruction;
  return train(model, train_data, val_data, c, on_epoch);
}

void check_transfer_compatible(const model::ModelConfig& pre, const model::ModelConfig& tgt) {
  if (pre.channels != tgt.channels)
    throw ConfigError("pretrained encoder has " + std::to_string(pre.channels) +
                      " channels but the target data has " + std::to_string(tgt.channels) +
                      "; re-initialise the channel-specific spatial embeddings (static.*, revin.*) "
                      "or pretrain on data with the same channel count");
  auto same = [](const char* what, std::size_t a, std::size_t b) {
    if (a != b)
      throw ConfigError(std::string("pretrained ") + what + " " + std::to_string(a) +
                        " differs from target " + std::to_string(b));
  };
  same("lookback", pre.lookback, tgt.lookback);
  same("patch_len", pre.patch, tgt.patch);
  same("stride", pre.stride, tgt.stride);
  same("d_model", pre.d_model, tgt.d_model);
  same("r_fm", pre.r_fm, tgt.r_fm);
  same("r_sp", pre.r_sp, tgt.r_sp);
  if (pre.variant != tgt.variant) throw ConfigError("pretrained variant differs from target variant");
  if (pre.dynamic_cardinalities != tgt.dynamic_cardinalities ||
      pre.static_cardinalities != tgt.static_cardinalities || pre.static_continuous != tgt.static_continuous)
    throw ConfigError("pretrained covariate inventory differs from the target's");
}

template <typename Real>
TransferResult transfer_train(model::FaCTRModel<Real>& model, const model::Checkpoint& pretrained,
                              data::BatchSource<Real>& train_data, data::BatchSource<Real>& val_data,
                              const TrainConfig& cfg, const TransferOptions& opts,
                              const EpochCallback& on_epoch) {
  check_transfer_compatible(pretrained.model_config(), model.config());
  model::Checkpoint encoder;
  encoder.header = pretrained.header;
  for (const auto& t : pretrained.tensors)
    if (t.name.rfind("head.", 0) != 0) encoder.tensors.push_back(t);
  model::load_into(model, encoder, {"head."});

  TransferResult res;
  TrainConfig probe = cfg;
  probe.objective = Objective::ForecastMse;
  probe.max_epochs = opts.probe_epochs;
  probe.patience = std::min(cfg.patience, std::max<std::size_t>(opts.probe_epochs, 1));
  model.set_trainable({"head."});
  res.probe = train(model, train_data, val_data, probe, on_epoch);
  if (opts.mode == TransferMode::Finetune) {
    TrainConfig ft = probe;
    ft.max_epochs = opts.finetune_epochs;
    ft.patience = std::min(cfg.patience, std::max<std::size_t>(opts.finetune_epochs, 1));
    model.set_trainable({});
    res.finetune = train(model, train_data, val_data, ft, on_epoch);
  }
  model.set_trainable({});
  return res;
}

#define FACTR_INSTANTIATE_TRAINER(R)                                                               \
  template TrainResult train(model::FaCTRModel<R>&, data::BatchSource<R>&, data::BatchSource<R>&, \
                             const TrainConfig&, const EpochCallback&);                            \
  template double validation_loss(model::FaCTRModel<R>&, data::BatchSource<R>&, const TrainConfig&, \
                                  std::uint64_t);                                                  \
  template TrainResult pretrain_masked(model::FaCTRModel<R>&, data::BatchSource<R>&,               \
                                       data::BatchSource<R>&, const TrainConfig&,                  \
                                       const EpochCallback&);                                      \
  template TransferResult transfer_train(model::FaCTRModel<R>&, const model::Checkpoint&,          \
                                         data::BatchSource<R>&, data::BatchSource<R>&,             \
                                         const TrainConfig&, const TransferOptions&,               \
                                         const EpochCallback&);

FACTR_INSTANTIATE_TRAINER(float)
FACTR_INSTANTIATE_TRAINER(double)

}  // namespace factr::train
