#pragma once

#include <cstdint>

#include "factr/data/dataset.hpp"

namespace factr::data {

/// Knobs of the eight-channel retail simulator. Defaults are the values the
/// tests and the case study are pinned to.
struct SynthRetailOptions {
  double weekly_period = 7.0;       // C1, C2, C4, C7, C8
  double fast_period = 2.0;         // C3
  double trend_slope = 0.01;        // C4, per day
  double noise_std = 1.0;           // C5
  double pulse_amplitude = 2.0;     // C6
  std::size_t pulse_width = 3;      // days
  std::size_t min_gap = 30;         // days between pulse onsets
  std::size_t max_gap = 45;
  std::size_t response_lag = 7;     // C6 onset -> C7 response onset
  std::size_t response_half_width = 3;
  double response_amplitude = 1.5;
  double c7_baseline = 1.0;
  double c7_weekly_amplitude = 0.3;
  double c8_baseline = 2.0;
  double suppression = 0.3;         // C8 multiplier while C6 is on
  std::int64_t start_timestamp = 1577836800;  // 2020-01-01 00:00:00
};

/// Deterministic daily series with channels C1..C8:
///   C1 weekly sine, C2 = C1, C3 fast sine, C4 weekly sine + trend,
///   C5 white noise, C6 promotion pulses, C7 lagged response to C6,
///   C8 weekly demand suppressed while C6 is active.
/// Throws ConfigError for fewer than 730 days.
SeriesDataset synth_retail_generate(std::size_t days, std::uint64_t seed,
                                    const SynthRetailOptions& opts = {});

/// Triangular response kernel value at offset u from the response onset.
double synth_response_kernel(std::size_t u, std::size_t half_width);

}  // namespace factr::data
