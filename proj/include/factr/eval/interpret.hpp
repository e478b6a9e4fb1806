#pragma once

#include <optional>
#include <string>
#include <vector>

#include "factr/data/windows.hpp"
#include "factr/eval/evaluate.hpp"
#include "factr/model/model.hpp"

namespace factr::eval {

/// Attention maps of one window, batch axis dropped.
struct InterpretabilityExport {
  std::size_t window = 0;
  std::size_t channels = 0;
  std::size_t patches = 0;
  std::vector<std::string> channel_names;
  std::vector<double> temporal;                // [C, N, N]
  std::optional<std::vector<double>> spatial;  // [C, C, N] (target, source, patch)

  double temporal_at(std::size_t c, std::size_t q, std::size_t k) const {
    return temporal[(c * patches + q) * patches + k];
  }
  double spatial_at(std::size_t target, std::size_t source, std::size_t patch) const {
    return (*spatial)[(target * channels + source) * patches + patch];
  }
  /// Largest |row sum - 1| over every stored softmax row.
  double max_row_sum_error() const;
};

template <typename Real>
InterpretabilityExport interpret_window(model::FaCTRModel<Real>& model,
                                        const data::WindowIterator<Real>& windows, std::size_t window,
                                        std::vector<std::string> channel_names = {});

/// Writes window<w>_temporal.csv (channel, query, key, weight),
/// window<w>_fm.csv (target, source, patch, score) and one SVG heatmap per
/// channel and map. FM heatmaps are scaled per patch column. Returns the
/// paths written, in order.
std::vector<std::string> write_interpretability(const InterpretabilityExport& dump, const std::string& dir);

struct DumpOptions {
  std::string dataset = "data";
  std::vector<std::string> channel_names;
};

/// For each window id and channel writes <dataset>_w<id>_<channel>.csv with
/// columns t, actual, forecast and a matching SVG line chart.
template <typename Real>
std::vector<std::string> forecast_dump(const Predictor<Real>& predict, const data::WindowIterator<Real>& windows,
                                       const std::vector<std::size_t>& ids, const std::string& dir,
                                       const DumpOptions& opts = {});

template <typename Real>
std::vector<std::string> forecast_dump(model::FaCTRModel<Real>& model, const data::WindowIterator<Real>& windows,
                                       const std::vector<std::size_t>& ids, const std::string& dir,
                                       const DumpOptions& opts = {});

/// Channel name made safe for a file name.
std::string file_token(const std::string& name);

}  // namespace factr::eval
