#include "factr/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "factr/autodiff/tape.hpp"
#include "factr/common/errors.hpp"

namespace factr::eval {

nlohmann::json ForecastReport::to_json() const {
  return {{"mse", mse},
          {"mae", mae},
          {"windows", windows},
          {"raw_space", raw_space},
          {"channel_names", channel_names},
          {"channel_mse", channel_mse},
          {"channel_mae", channel_mae},
          {"step_mse", step_mse},
          {"step_mae", step_mae}};
}

ForecastReport ForecastReport::from_json(const nlohmann::json& j) {
  ForecastReport r;
  j.at("mse").get_to(r.mse);
  j.at("mae").get_to(r.mae);
  j.at("windows").get_to(r.windows);
  j.at("raw_space").get_to(r.raw_space);
  j.at("channel_names").get_to(r.channel_names);
  j.at("channel_mse").get_to(r.channel_mse);
  j.at("channel_mae").get_to(r.channel_mae);
  j.at("step_mse").get_to(r.step_mse);
  j.at("step_mae").get_to(r.step_mae);
  return r;
}

template <typename Real>
ForecastReport evaluate_predictor(const Predictor<Real>& predict, data::BatchSource<Real>& src,
                                  const EvalOptions& opts) {
  ForecastReport rep;
  rep.raw_space = opts.raw != nullptr;
  std::vector<double> ch_sq, ch_abs, st_sq, st_abs;
  std::size_t c = 0, t = 0;
  src.start_epoch();
  data::WindowBatch<Real> batch;
  while (src.next(batch)) {
    const auto pred = predict(batch);
    if (pred.shape() != batch.targets.shape())
      throw ad::DimensionError("forecast " + ad::shape_str(pred.shape()) + " vs target " +
                               ad::shape_str(batch.targets.shape()));
    if (rep.windows == 0) {
      c = pred.size(1);
      t = pred.size(2);
      ch_sq.assign(c, 0);
      ch_abs.assign(c, 0);
      st_sq.assign(t, 0);
      st_abs.assign(t, 0);
      if (opts.raw && opts.raw->std.size() != c)
        throw ConfigError("raw-space statistics cover " + std::to_string(opts.raw->std.size()) +
                          " channels, forecasts have " + std::to_string(c));
    } else if (pred.size(1) != c || pred.size(2) != t) {
      throw ad::DimensionError("forecast shape changed mid-stream");
    }
    for (std::size_t b = 0; b < pred.size(0); ++b)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double scale = opts.raw ? opts.raw->std[ci] : 1.0;
        for (std::size_t ti = 0; ti < t; ++ti) {
          const std::size_t i = (b * c + ci) * t + ti;
          const double e = (static_cast<double>(pred[i]) - static_cast<double>(batch.targets[i])) * scale;
          ch_sq[ci] += e * e;
          ch_abs[ci] += std::abs(e);
          st_sq[ti] += e * e;
          st_abs[ti] += std::abs(e);
        }
      }
    rep.windows += pred.size(0);
  }
  if (rep.windows == 0) throw DataError("evaluation stream produced no windows");

  const double w = static_cast<double>(rep.windows);
  double sq = 0, ab = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    sq += ch_sq[ci];
    ab += ch_abs[ci];
    rep.channel_mse.push_back(ch_sq[ci] / (w * static_cast<double>(t)));
    rep.channel_mae.push_back(ch_abs[ci] / (w * static_cast<double>(t)));
  }
  for (std::size_t ti = 0; ti < t; ++ti) {
    rep.step_mse.push_back(st_sq[ti] / (w * static_cast<double>(c)));
    rep.step_mae.push_back(st_abs[ti] / (w * static_cast<double>(c)));
  }
  const double n = w * static_cast<double>(c * t);
  rep.mse = sq / n;
  rep.mae = ab / n;
  rep.channel_names = opts.channel_names;
  if (rep.channel_names.empty())
    for (std::size_t ci = 0; ci < c; ++ci) rep.channel_names.push_back("ch" + std::to_string(ci));
  if (rep.channel_names.size() != c)
    throw ConfigError("expected " + std::to_string(c) + " channel names, got " +
                      std::to_string(rep.channel_names.size()));
  return rep;
}

template <typename Real>
ForecastReport evaluate(model::FaCTRModel<Real>& model, data::BatchSource<Real>& src,
                        const EvalOptions& opts) {
  ad::NoGradGuard<Real> guard;
  Predictor<Real> predict = [&model](const data::WindowBatch<Real>& b) {
    return model.forward(b.inputs, b.dyn ? &*b.dyn : nullptr, {}).forecast;
  };
  return evaluate_predictor(predict, src, opts);
}

std::vector<ChannelError> per_channel_errors(const ForecastReport& report) {
  std::vector<ChannelError> out;
  for (std::size_t c = 0; c < report.channel_mse.size(); ++c)
    out.push_back({c, c < report.channel_names.size() ? report.channel_names[c] : std::to_string(c),
                   report.channel_mse[c], report.channel_mae[c]});
  std::stable_sort(out.begin(), out.end(),
                   [](const ChannelError& a, const ChannelError& b) { return a.mse > b.mse; });
  return out;
}

std::string channel_error_tsv(const std::vector<ChannelError>& ranked, std::size_t top) {
  std::ostringstream os;
  os << "rank\tchannel\tname\tmse\tmae\n";
  const std::size_t n = top == 0 ? ranked.size() : std::min(top, ranked.size());
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = ranked[i];
    os << i + 1 << '\t' << e.channel << '\t' << e.name;
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", e.mse, e.mae);
    os << buf;
  }
  return os.str();
}

std::string ParamAudit::text() const {
  std::ostringstream os;
  std::size_t width = 4;
  for (const auto& t : tensors) width = std::max(width, t.name.size());
  for (const auto& t : tensors) {
    os << t.name << std::string(width - t.name.size() + 2, ' ') << ad::shape_str(t.shape);
    os << '\t' << t.count << '\n';
  }
  os << "total" << std::string(width - 3, ' ') << enumerated << " (analytic " << analytic << ")\n";
  return os.str();
}

nlohmann::json ParamAudit::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& t : tensors) rows.push_back({{"name", t.name}, {"shape", t.shape}, {"count", t.count}});
  return {{"tensors", rows}, {"enumerated", enumerated}, {"analytic", analytic}};
}

ParamAudit audit_params(const model::Checkpoint& ckpt) {
  const auto expected = model::count_params(ckpt.model_config());
  ParamAudit audit;
  audit.analytic = expected.total;
  for (const auto& t : ckpt.tensors) {
    audit.tensors.push_back({t.name, t.shape, ad::numel(t.shape)});
    audit.enumerated += ad::numel(t.shape);
  }
  if (audit.tensors.size() != expected.breakdown.size())
    throw IntegrityError("checkpoint holds " + std::to_string(audit.tensors.size()) +
                         " tensors, the config implies " + std::to_string(expected.breakdown.size()));
  for (std::size_t i = 0; i < audit.tensors.size(); ++i) {
    const auto& [name, count] = expected.breakdown[i];
    if (audit.tensors[i].name != name)
      throw IntegrityError("tensor " + std::to_string(i) + " is '" + audit.tensors[i].name +
                           "', expected '" + name + "'");
    if (audit.tensors[i].count != count)
      throw IntegrityError("tensor '" + name + "' holds " + std::to_string(audit.tensors[i].count) +
                           " values, the closed form gives " + std::to_string(count));
  }
  if (audit.enumerated != audit.analytic)
    throw IntegrityError("enumerated total " + std::to_string(audit.enumerated) +
                         " differs from analytic total " + std::to_string(audit.analytic));
  return audit;
}

template ForecastReport evaluate_predictor(const Predictor<float>&, data::BatchSource<float>&, const EvalOptions&);
template ForecastReport evaluate_predictor(const Predictor<double>&, data::BatchSource<double>&, const EvalOptions&);
template ForecastReport evaluate(model::FaCTRModel<float>&, data::BatchSource<float>&, const EvalOptions&);
template ForecastReport evaluate(model::FaCTRModel<double>&, data::BatchSource<double>&, const EvalOptions&);

}  // namespace factr::eval
