#include "factr/data/split.hpp"

#include <algorithm>
#include <cmath>

#include "factr/common/errors.hpp"

namespace factr::data {

SplitBorders chronological_split(std::size_t rows, const SplitSpec& spec, Frequency freq) {
  if (spec.train <= 0 || spec.val <= 0 || spec.test <= 0)
    throw ConfigError("split proportions must all be positive");
  SplitBorders b;
  if (spec.mode == SplitMode::Months) {
    constexpr std::int64_t month_seconds = 30LL * 86400;
    if (month_seconds % freq.seconds != 0)
      throw ConfigError("frequency " + freq.str() + " does not divide a 30-day month");
    const auto per_month = static_cast<double>(month_seconds / freq.seconds);
    const auto tr = static_cast<std::size_t>(std::llround(spec.train * per_month));
    const auto va = static_cast<std::size_t>(std::llround(spec.val * per_month));
    const auto te = static_cast<std::size_t>(std::llround(spec.test * per_month));
    b.train_end = std::min(rows, tr);
    b.val_end = std::min(rows, tr + va);
    b.test_end = std::min(rows, tr + va + te);
  } else {
    const double total = spec.train + spec.val + spec.test;
    const auto tr = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * spec.train / total));
    const auto va = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * spec.val / total));
    b.train_end = tr;
    b.val_end = tr + va;
    b.test_end = rows;
  }
  if (b.train_end == 0 || b.val_end <= b.train_end || b.test_end <= b.val_end)
    throw ConfigError("split of " + std::to_string(rows) + " rows leaves an empty segment (train " +
                      std::to_string(b.train_end) + ", val " + std::to_string(b.val_end - b.train_end) +
                      ", test " + std::to_string(b.test_end - std::min(b.test_end, b.val_end)) + ")");
  return b;
}

RowRange split_range(const SplitBorders& borders, Split which, std::size_t lookback) {
  switch (which) {
    case Split::Train:
      return {0, borders.train_end};
    case Split::Val:
      return {borders.train_end - std::min(lookback, borders.train_end), borders.val_end};
    case Split::Test:
      return {borders.val_end - std::min(lookback, borders.val_end), borders.test_end};
  }
  return {};
}

NormStats fit_norm_stats(const SeriesDataset& ds, RowRange train) {
  if (train.size() == 0) throw ConfigError("fit_norm_stats: empty training range");
  const std::size_t c = ds.channels();
  NormStats s;
  s.mean.assign(c, 0.0);
  s.std.assign(c, 0.0);
  const double n = static_cast<double>(train.size());
  for (std::size_t r = train.begin; r < train.end; ++r)
    for (std::size_t k = 0; k < c; ++k) s.mean[k] += ds.at(r, k);
  for (auto& m : s.mean) m /= n;
  for (std::size_t r = train.begin; r < train.end; ++r)
    for (std::size_t k = 0; k < c; ++k) {
      const double d = ds.at(r, k) - s.mean[k];
      s.std[k] += d * d;
    }
  for (auto& v : s.std) v = std::max(std::sqrt(v / n), 1e-8);
  return s;
}

SeriesDataset apply_norm(const SeriesDataset& ds, const NormStats& stats) {
  SeriesDataset out = ds;
  out.values = ds.values.clone();
  const std::size_t c = ds.channels();
  auto v = out.values.data();
  for (std::size_t r = 0; r < ds.rows(); ++r)
    for (std::size_t k = 0; k < c; ++k) v[r * c + k] = (v[r * c + k] - stats.mean[k]) / stats.std[k];
  return out;
}

SeriesDataset invert_norm(const SeriesDataset& ds, const NormStats& stats) {
  SeriesDataset out = ds;
  out.values = ds.values.clone();
  const std::size_t c = ds.channels();
  auto v = out.values.data();
  for (std::size_t r = 0; r < ds.rows(); ++r)
    for (std::size_t k = 0; k < c; ++k) v[r * c + k] = v[r * c + k] * stats.std[k] + stats.mean[k];
  return out;
}

}  // namespace factr::data
