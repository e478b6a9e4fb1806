#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "factr/data/split.hpp"
#include "factr/data/windows.hpp"
#include "factr/model/checkpoint.hpp"
#include "factr/model/model.hpp"

namespace factr::eval {

struct ForecastReport {
  double mse = 0;
  double mae = 0;
  std::vector<double> channel_mse;  // [C]
  std::vector<double> channel_mae;
  std::vector<double> step_mse;     // [T]
  std::vector<double> step_mae;
  std::size_t windows = 0;
  std::vector<std::string> channel_names;
  bool raw_space = false;

  nlohmann::json to_json() const;
  static ForecastReport from_json(const nlohmann::json& j);
};

struct EvalOptions {
  std::vector<std::string> channel_names;
  /// When set, forecasts and targets are mapped back to the original scale
  /// before scoring.
  const data::NormStats* raw = nullptr;
};

template <typename Real>
using Predictor = std::function<ad::Tensor<Real>(const data::WindowBatch<Real>&)>;

/// Scores an arbitrary predictor over every window of the stream, in
/// stream order with double accumulation.
template <typename Real>
ForecastReport evaluate_predictor(const Predictor<Real>& predict, data::BatchSource<Real>& src,
                                  const EvalOptions& opts = {});

/// Inference-mode forecast of every window.
template <typename Real>
ForecastReport evaluate(model::FaCTRModel<Real>& model, data::BatchSource<Real>& src,
                        const EvalOptions& opts = {});

struct ChannelError {
  std::size_t channel = 0;
  std::string name;
  double mse = 0;
  double mae = 0;
};

/// Channels by descending MSE; ties keep channel order.
std::vector<ChannelError> per_channel_errors(const ForecastReport& report);

/// rank, channel, name, mse, mae as TSV; top == 0 lists every channel.
std::string channel_error_tsv(const std::vector<ChannelError>& ranked, std::size_t top = 0);

struct TensorCount {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t count = 0;
};

struct ParamAudit {
  std::vector<TensorCount> tensors;
  std::size_t enumerated = 0;
  std::size_t analytic = 0;

  std::string text() const;
  nlohmann::json to_json() const;
};

/// Counts every stored tensor and cross-checks against the closed-form
/// inventory of the checkpoint's config. Any disagreement in names, order
/// or counts raises IntegrityError.
ParamAudit audit_params(const model::Checkpoint& ckpt);

}  // namespace factr::eval
