#include "factr/eval/interpret.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "factr/autodiff/tape.hpp"
#include "factr/common/errors.hpp"
#include "factr/eval/svg.hpp"

namespace factr::eval {
namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t c) {
  if (names.empty())
    for (std::size_t i = 0; i < c; ++i) names.push_back("ch" + std::to_string(i));
  if (names.size() != c)
    throw ConfigError("expected " + std::to_string(c) + " channel names, got " + std::to_string(names.size()));
  return names;
}

void check_ids(const std::vector<std::size_t>& ids, std::size_t count) {
  for (auto id : ids)
    if (id >= count)
      throw ConfigError("window id " + std::to_string(id) + " is outside the valid range [0, " +
                        std::to_string(count == 0 ? 0 : count - 1) + "]");
}

}  // namespace

std::string file_token(const std::string& name) {
  std::string out;
  for (char ch : name) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ? ch : '_';
  return out.empty() ? "_" : out;
}

double InterpretabilityExport::max_row_sum_error() const {
  double worst = 0;
  auto rows = [&](const std::vector<double>& m, std::size_t count, std::size_t len, std::size_t step,
                  auto offset) {
    for (std::size_t r = 0; r < count; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < len; ++k) s += m[offset(r) + k * step];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  };
  rows(temporal, channels * patches, patches, 1, [&](std::size_t r) { return r * patches; });
  // spatial rows run over the source axis for a fixed (target, patch)
  if (spatial)
    rows(*spatial, channels * patches, channels, patches, [&](std::size_t r) {
      return (r / patches) * channels * patches + r % patches;
    });
  return worst;
}

template <typename Real>
InterpretabilityExport interpret_window(model::FaCTRModel<Real>& model,
                                        const data::WindowIterator<Real>& windows, std::size_t window,
                                        std::vector<std::string> channel_names) {
  check_ids({window}, windows.window_count());
  const auto batch = windows.gather({window});
  ad::NoGradGuard<Real> guard;
  model::ForwardOptions fo;
  fo.dump = true;
  const auto out = model.forward(batch.inputs, batch.dyn ? &*batch.dyn : nullptr, fo);
  const auto& d = *out.dump;

  InterpretabilityExport ex;
  ex.window = window;
  ex.channels = d.temporal.size(1);
  ex.patches = d.temporal.size(2);
  ex.channel_names = default_names(std::move(channel_names), ex.channels);
  ex.temporal.assign(d.temporal.data().begin(), d.temporal.data().end());
  if (d.spatial) ex.spatial = std::vector<double>(d.spatial->data().begin(), d.spatial->data().end());
  return ex;
}

std::vector<std::string> write_interpretability(const InterpretabilityExport& dump, const std::string& dir) {
  fs::create_directories(dir);
  const std::size_t c = dump.channels, n = dump.patches;
  const std::string stem = "window" + std::to_string(dump.window);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto path = fs::path(dir) / name;
    write_file(path, text);
    written.push_back(path.string());
  };

  std::vector<std::string> patch_labels;
  for (std::size_t p = 0; p < n; ++p) patch_labels.push_back(std::to_string(p));

  std::ostringstream tcsv;
  tcsv << "channel,query,key,weight\n";
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t k = 0; k < n; ++k)
        tcsv << dump.channel_names[ci] << ',' << q << ',' << k << ',' << fmt(dump.temporal_at(ci, q, k)) << '\n';
  emit(stem + "_temporal.csv", tcsv.str());

  if (dump.spatial) {
    std::ostringstream fcsv;
    fcsv << "target,source,patch,score\n";
    for (std::size_t t = 0; t < c; ++t)
      for (std::size_t s = 0; s < c; ++s)
        for (std::size_t p = 0; p < n; ++p)
          fcsv << dump.channel_names[t] << ',' << dump.channel_names[s] << ',' << p << ','
               << fmt(dump.spatial_at(t, s, p)) << '\n';
    emit(stem + "_fm.csv", fcsv.str());
  }

  for (std::size_t ci = 0; ci < c; ++ci) {
    const auto& name = dump.channel_names[ci];
    std::vector<double> att(dump.temporal.begin() + static_cast<std::ptrdiff_t>(ci * n * n),
                            dump.temporal.begin() + static_cast<std::ptrdiff_t>((ci + 1) * n * n));
    emit(stem + "_temporal_" + file_token(name) + ".svg",
         svg::heatmap("temporal attention, " + name + " (query x key)", att, n, n, patch_labels,
                      patch_labels, 0.0, 1.0));
    if (!dump.spatial) continue;
    std::vector<double> m(c * n);
    for (std::size_t p = 0; p < n; ++p) {
      double lo = 1, hi = 0;
      for (std::size_t s = 0; s < c; ++s) {
        lo = std::min(lo, dump.spatial_at(ci, s, p));
        hi = std::max(hi, dump.spatial_at(ci, s, p));
      }
      for (std::size_t s = 0; s < c; ++s)
        m[s * n + p] = hi - lo > 1e-12 ? (dump.spatial_at(ci, s, p) - lo) / (hi - lo) : 0.5;
    }
    emit(stem + "_fm_" + file_token(name) + ".svg",
         svg::heatmap("FM scores into " + name + " (source x patch)", m, c, n, dump.channel_names,
                      patch_labels, 0.0, 1.0));
  }
  return written;
}

template <typename Real>
std::vector<std::string> forecast_dump(const Predictor<Real>& predict, const data::WindowIterator<Real>& windows,
                                       const std::vector<std::size_t>& ids, const std::string& dir,
                                       const DumpOptions& opts) {
  check_ids(ids, windows.window_count());
  fs::create_directories(dir);
  std::vector<std::string> written;
  for (auto id : ids) {
    const auto batch = windows.gather({id});
    const auto pred = predict(batch);
    if (pred.shape() != batch.targets.shape())
      throw ad::DimensionError("forecast " + ad::shape_str(pred.shape()) + " vs target " +
                               ad::shape_str(batch.targets.shape()));
    const std::size_t c = pred.size(1), t = pred.size(2);
    const auto names = default_names(opts.channel_names, c);
    for (std::size_t ci = 0; ci < c; ++ci) {
      svg::Series actual{"actual", "#1f77b4", {}}, forecast{"forecast", "#d62728", {}};
      std::ostringstream csv;
      csv << "t,actual,forecast\n";
      for (std::size_t ti = 0; ti < t; ++ti) {
        const double a = static_cast<double>(batch.targets[ci * t + ti]);
        const double f = static_cast<double>(pred[ci * t + ti]);
        csv << ti << ',' << fmt(a) << ',' << fmt(f) << '\n';
        actual.values.push_back(a);
        forecast.values.push_back(f);
      }
      const std::string stem = file_token(opts.dataset) + "_w" + std::to_string(id) + "_" + file_token(names[ci]);
      const auto csv_path = fs::path(dir) / (stem + ".csv");
      const auto svg_path = fs::path(dir) / (stem + ".svg");
      write_file(csv_path, csv.str());
      write_file(svg_path, svg::line_chart(opts.dataset + " window " + std::to_string(id) + ", " + names[ci],
                                           {actual, forecast}));
      written.push_back(csv_path.string());
      written.push_back(svg_path.string());
    }
  }
  return written;
}

template <typename Real>
std::vector<std::string> forecast_dump(model::FaCTRModel<Real>& model, const data::WindowIterator<Real>& windows,
                                       const std::vector<std::size_t>& ids, const std::string& dir,
                                       const DumpOptions& opts) {
  ad::NoGradGuard<Real> guard;
  Predictor<Real> predict = [&model](const data::WindowBatch<Real>& b) {
    return model.forward(b.inputs, b.dyn ? &*b.dyn : nullptr, {}).forecast;
  };
  return forecast_dump(predict, windows, ids, dir, opts);
}

#define FACTR_INSTANTIATE_INTERPRET(R)                                                                 \
  template InterpretabilityExport interpret_window(model::FaCTRModel<R>&, const data::WindowIterator<R>&, \
                                                   std::size_t, std::vector<std::string>);             \
  template std::vector<std::string> forecast_dump(const Predictor<R>&, const data::WindowIterator<R>&, \
                                                  const std::vector<std::size_t>&, const std::string&, \
                                                  const DumpOptions&);                                 \
  template std::vector<std::string> forecast_dump(model::FaCTRModel<R>&, const data::WindowIterator<R>&, \
                                                  const std::vector<std::size_t>&, const std::string&, \
                                                  const DumpOptions&);

FACTR_INSTANTIATE_INTERPRET(float)
FACTR_INSTANTIATE_INTERPRET(double)

}  // namespace factr::eval
