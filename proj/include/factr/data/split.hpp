#pragma once

#include <cstddef>
#include <vector>

#include "factr/data/dataset.hpp"

namespace factr::data {

enum class SplitMode { Ratio, Months };

/// Train/val/test proportions (Ratio) or month counts (Months, 30-day months).
struct SplitSpec {
  SplitMode mode = SplitMode::Ratio;
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  static SplitSpec ratio(double tr, double va, double te) { return {SplitMode::Ratio, tr, va, te}; }
  static SplitSpec months(double tr, double va, double te) { return {SplitMode::Months, tr, va, te}; }
};

/// End row (exclusive) of each split. Splits are [0, train_end),
/// [train_end, val_end), [val_end, test_end).
struct SplitBorders {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t test_end = 0;
};

enum class Split { Train, Val, Test };

/// Rows a window stream may touch: [begin, end). Val/test ranges start up
/// to `lookback` rows early so their first window has full context; targets
/// always fall inside the split proper.
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

SplitBorders chronological_split(std::size_t rows, const SplitSpec& spec, Frequency freq);
RowRange split_range(const SplitBorders& borders, Split which, std::size_t lookback);

/// Per-channel statistics of the training split (biased std, floored at 1e-8).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

NormStats fit_norm_stats(const SeriesDataset& ds, RowRange train);
SeriesDataset apply_norm(const SeriesDataset& ds, const NormStats& stats);
SeriesDataset invert_norm(const SeriesDataset& ds, const NormStats& stats);

}  // namespace factr::data
