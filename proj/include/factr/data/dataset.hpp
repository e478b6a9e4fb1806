#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "factr/autodiff/tensor.hpp"

namespace factr::data {

/// Sampling interval in seconds.
struct Frequency {
  std::int64_t seconds = 3600;

  /// Accepts "h", "1h", "15min", "10min", "5min", "d", "1d", "30s", "t".
  static Frequency parse(const std::string& text);
  std::string str() const;
  bool operator==(const Frequency&) const = default;
};

/// Multivariate series, rows in time order, channels as columns.
struct SeriesDataset {
  ad::Tensor<double> values;                       // [rows, C]
  std::optional<std::vector<std::int64_t>> timestamps;  // seconds since epoch, naive UTC
  std::vector<std::string> channel_names;
  Frequency frequency;

  std::size_t rows() const { return values.shape()[0]; }
  std::size_t channels() const { return values.shape()[1]; }
  double at(std::size_t row, std::size_t channel) const {
    return values[row * channels() + channel];
  }
};

/// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" and the ISO-8601 'T' form.
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t seconds);

/// Reads a header-first CSV. A leading column named "date" becomes the
/// timestamp axis; every other column is a channel. Fails with DataError
/// naming the offending row for non-numeric cells, missing values, or
/// timestamps that are not strictly increasing at the declared frequency.
SeriesDataset load_csv_dataset(const std::string& path, Frequency frequency);
SeriesDataset parse_csv_dataset(const std::string& text, Frequency frequency);

/// Writes the same schema load_csv_dataset reads; values round-trip exactly.
void write_csv_dataset(const SeriesDataset& ds, const std::string& path);
std::string format_csv_dataset(const SeriesDataset& ds);

}  // namespace factr::data
