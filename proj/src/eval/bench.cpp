#include "factr/eval/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "factr/autodiff/ops.hpp"
#include "factr/autodiff/tape.hpp"
#include "factr/common/errors.hpp"
#include "factr/common/random.hpp"
#include "factr/model/layers.hpp"

namespace factr::eval {
namespace {

using T = ad::Tensor<float>;

T random_tensor(ad::Shape shape, std::mt19937_64& rng) {
  T t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rnd::normal(rng));
  return t;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median_seconds(const std::function<void()>& kernel, const BenchOptions& o) {
  auto t0 = std::chrono::steady_clock::now();
  kernel();
  const double first = seconds_since(t0);
  for (std::size_t i = 1; i < o.warmup; ++i) kernel();
  const auto inner = static_cast<std::size_t>(std::max(1.0, std::ceil(o.min_rep_seconds / std::max(first, 1e-9))));
  std::vector<double> reps;
  for (std::size_t r = 0; r < o.repeats; ++r) {
    t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < inner; ++i) kernel();
    reps.push_back(seconds_since(t0) / static_cast<double>(inner));
  }
  std::nth_element(reps.begin(), reps.begin() + static_cast<std::ptrdiff_t>(reps.size() / 2), reps.end());
  return reps[reps.size() / 2];
}

}  // namespace

BenchComponent parse_bench_component(const std::string& name) {
  if (name == "fm") return BenchComponent::Fm;
  if (name == "temporal") return BenchComponent::Temporal;
  throw ConfigError("unknown benchmark component '" + name + "' (expected fm or temporal)");
}

std::string bench_component_name(BenchComponent c) { return c == BenchComponent::Fm ? "fm" : "temporal"; }

std::string BenchTable::tsv() const {
  std::ostringstream os;
  os << "component\tsize\tseconds\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "\t%zu\t%.6e\n", p.size, p.seconds);
    os << bench_component_name(component) << buf;
  }
  std::snprintf(buf, sizeof buf, "# slope\t%.4f\n", slope);
  os << buf;
  return os.str();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope needs at least two paired points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) throw ConfigError("log-log slope needs positive values");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw ConfigError("slope needs at least two distinct sizes");
  return sxy / sxx;
}

BenchTable scaling_benchmark(BenchComponent component, const std::vector<std::size_t>& sizes,
                             const BenchOptions& opts) {
  if (sizes.size() < 2) throw ConfigError("benchmark sweep needs at least two sizes");
  const double ratio = static_cast<double>(sizes[1]) / static_cast<double>(std::max<std::size_t>(sizes[0], 1));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) throw ConfigError("benchmark sizes must be positive");
    if (i > 0 && std::abs(static_cast<double>(sizes[i]) / static_cast<double>(sizes[i - 1]) - ratio) > 1e-9)
      throw ConfigError("benchmark sizes must be geometrically spaced");
  }
  if (ratio <= 1) throw ConfigError("benchmark sizes must increase");
  if (opts.repeats == 0) throw ConfigError("benchmark needs at least one repetition");

  ad::NoGradGuard<float> guard;
  std::mt19937_64 rng(opts.seed);
  BenchTable table;
  table.component = component;
  const std::size_t b = opts.batch, d = opts.d_model;
  for (auto s : sizes) {
    std::function<void()> kernel;
    if (component == BenchComponent::Fm) {
      auto h0 = random_tensor({b, s, opts.patches, d}, rng);
      auto v = random_tensor({b, opts.patches, s, d}, rng);
      model::LinearW<float> fm{random_tensor({d, opts.r_fm}, rng), T({opts.r_fm}, 0.0f)};
      kernel = [h0, v, fm] {
        auto sc = model::fm_scores(h0, fm);
        auto z = ad::matmul(sc.weights, v);
        (void)z;
      };
    } else {
      auto q = random_tensor({b, opts.channels, s, d}, rng);
      auto k = random_tensor({b, opts.channels, s, d}, rng);
      auto v = random_tensor({b, opts.channels, s, d}, rng);
      const float scale = 1.0f / std::sqrt(static_cast<float>(d));
      kernel = [q, k, v, scale] {
        auto a = ad::softmax(ad::scale(ad::matmul(q, ad::transpose_last(k)), scale), -1);
        auto z = ad::matmul(a, v);
        (void)z;
      };
    }
    table.points.push_back({s, median_seconds(kernel, opts)});
  }
  std::vector<double> x, y;
  for (const auto& p : table.points) {
    x.push_back(static_cast<double>(p.size));
    y.push_back(p.seconds);
  }
  table.slope = loglog_slope(x, y);
  return table;
}

}  // namespace factr::eval
