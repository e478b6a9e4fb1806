#include "factr/data/synth.hpp"

#include <cmath>
#include <random>

#include "factr/common/errors.hpp"
#include "factr/common/random.hpp"

namespace factr::data {

double synth_response_kernel(std::size_t u, std::size_t half_width) {
  if (u > 2 * half_width) return 0.0;
  const double w = static_cast<double>(half_width);
  return 1.0 - std::abs(static_cast<double>(u) - w) / (w + 1.0);
}

SeriesDataset synth_retail_generate(std::size_t days, std::uint64_t seed,
                                    const SynthRetailOptions& opts) {
  if (days < 730)
    throw ConfigError("synthetic series needs at least 730 days, got " + std::to_string(days));
  if (opts.min_gap == 0 || opts.max_gap < opts.min_gap || opts.pulse_width == 0 ||
      opts.pulse_width > opts.min_gap || opts.weekly_period <= 0 || opts.fast_period <= 0)
    throw ConfigError("invalid synthetic generator options");

  constexpr double two_pi = 6.283185307179586476925;
  constexpr double half_pi = 1.570796326794896619231;
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> onsets;
  const auto gap_span = static_cast<std::uint64_t>(opts.max_gap - opts.min_gap + 1);
  std::size_t t = opts.min_gap + rnd::index(rng, gap_span);
  while (t < days) {
    onsets.push_back(t);
    t += opts.min_gap + rnd::index(rng, gap_span);
  }

  std::vector<double> pulse(days, 0.0), response(days, 0.0);
  for (std::size_t on : onsets) {
    for (std::size_t k = 0; k < opts.pulse_width && on + k < days; ++k) pulse[on + k] = 1.0;
    const std::size_t r0 = on + opts.response_lag;
    for (std::size_t u = 0; u <= 2 * opts.response_half_width && r0 + u < days; ++u)
      response[r0 + u] += synth_response_kernel(u, opts.response_half_width);
  }

  constexpr std::size_t c = 8;
  std::vector<double> values(days * c);
  for (std::size_t d = 0; d < days; ++d) {
    const double td = static_cast<double>(d);
    const double weekly = std::sin(two_pi * td / opts.weekly_period);
    double* row = values.data() + d * c;
    row[0] = weekly;
    row[1] = weekly;
    row[2] = std::sin(two_pi * td / opts.fast_period + half_pi);
    row[3] = weekly + opts.trend_slope * td;
    row[4] = rnd::normal(rng, 0.0, opts.noise_std);
    row[5] = pulse[d] * opts.pulse_amplitude;
    row[6] = opts.c7_baseline + opts.c7_weekly_amplitude * weekly +
             opts.response_amplitude * response[d];
    row[7] = (opts.c8_baseline + weekly) * (pulse[d] > 0 ? opts.suppression : 1.0);
  }

  SeriesDataset ds;
  ds.values = ad::Tensor<double>({days, c}, std::move(values));
  ds.channel_names = {"C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8"};
  ds.frequency = Frequency{86400};
  std::vector<std::int64_t> stamps(days);
  for (std::size_t d = 0; d < days; ++d)
    stamps[d] = opts.start_timestamp + static_cast<std::int64_t>(d) * 86400;
  ds.timestamps = std::move(stamps);
  return ds;
}

}  // namespace factr::data
