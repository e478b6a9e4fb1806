#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "factr/autodiff/tensor.hpp"
#include "factr/data/dataset.hpp"
#include "factr/data/split.hpp"

namespace factr::data {

/// Calendar features per row: hour-of-day, day-of-week (Monday = 0),
/// day-of-month (0-based), month (0-based).
inline constexpr std::size_t kCalendarFeatures = 4;
inline const std::vector<std::size_t> kCalendarCardinalities = {24, 7, 31, 12};

/// [span, K] calendar indices for consecutive timestamps. Returns an empty
/// optional (the K = 0 marker) when no timestamps are available.
std::optional<ad::IndexTensor> calendar_covariates(
    const std::optional<std::vector<std::int64_t>>& timestamps, std::size_t begin,
    std::size_t span);

template <typename Real>
struct WindowBatch {
  ad::Tensor<Real> inputs;            // [B, C, L]
  ad::Tensor<Real> targets;           // [B, C, T]
  std::optional<ad::IndexTensor> dyn;  // [B, 1, L, K], shared by all channels
  std::vector<std::size_t> starts;    // first input row of each window

  std::size_t size() const { return starts.size(); }
};

struct WindowOptions {
  std::size_t lookback = 512;
  std::size_t horizon = 96;
  std::size_t stride = 1;
  std::size_t batch = 32;
  bool shuffle = false;
  std::uint64_t seed = 0;
  bool calendar = true;  // attach calendar covariates when timestamps exist
};

/// Anything the trainer can pull batches from, one epoch at a time.
template <typename Real>
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual void start_epoch() = 0;
  virtual bool next(WindowBatch<Real>& out) = 0;
};

/// Number of windows in a range: floor((n - L - T) / stride) + 1.
std::size_t window_count(std::size_t range_rows, std::size_t lookback, std::size_t horizon,
                         std::size_t stride = 1);

/// Streams (input, target) windows over a row range. Evaluation order is
/// chronological; with shuffle on, each epoch draws a fresh permutation from
/// the iterator's own seeded generator.
template <typename Real>
class WindowIterator : public BatchSource<Real> {
 public:
  WindowIterator(const SeriesDataset& ds, RowRange range, WindowOptions opts);

  std::size_t window_count() const { return starts_.size(); }
  std::size_t batch_count() const;
  const std::vector<std::size_t>& order() const { return order_; }

  /// Reshuffles (when enabled) and rewinds.
  void start_epoch() override;
  bool next(WindowBatch<Real>& out) override;

  /// Batch built from explicit window ordinals (0 .. window_count-1).
  WindowBatch<Real> gather(const std::vector<std::size_t>& window_ids) const;

 private:
  const SeriesDataset* ds_;
  RowRange range_;
  WindowOptions opts_;
  std::vector<std::size_t> starts_;
  std::vector<std::size_t> order_;
  std::vector<double> channel_major_;   // [C, rows]
  std::optional<ad::IndexTensor> calendar_;  // [rows, K]
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace factr::data
