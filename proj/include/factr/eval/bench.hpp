#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace factr::eval {

enum class BenchComponent { Fm, Temporal };

BenchComponent parse_bench_component(const std::string& name);
std::string bench_component_name(BenchComponent c);

struct BenchOptions {
  std::size_t batch = 1;
  std::size_t channels = 32;  // held fixed by the temporal sweep
  std::size_t patches = 16;   // held fixed by the fm sweep
  std::size_t d_model = 32;
  std::size_t r_fm = 8;
  std::size_t repeats = 5;
  std::size_t warmup = 1;
  double min_rep_seconds = 0.02;  // short kernels are looped until a repetition lasts this long
  std::uint64_t seed = 0;
};

struct BenchPoint {
  std::size_t size = 0;
  double seconds = 0;  // median per call
};

struct BenchTable {
  BenchComponent component = BenchComponent::Fm;
  std::vector<BenchPoint> points;
  double slope = 0;  // least-squares slope of log(seconds) on log(size)

  std::string tsv() const;
};

/// Times the FM block (factor projection, Gram, softmax and the A V
/// aggregation) over channel counts, or the temporal attention core
/// softmax(Q K^T / sqrt(D)) V over patch counts. Sizes must form a
/// geometric sequence of at least two points.
BenchTable scaling_benchmark(BenchComponent component, const std::vector<std::size_t>& sizes,
                             const BenchOptions& opts = {});

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace factr::eval
