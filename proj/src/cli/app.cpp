#include "factr/cli/app.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "factr/cli/config.hpp"
#include "factr/cli/manifest.hpp"
#include "factr/common/errors.hpp"
#include "factr/data/synth.hpp"
#include "factr/data/windows.hpp"
#include "factr/eval/bench.hpp"
#include "factr/eval/evaluate.hpp"
#include "factr/eval/interpret.hpp"
#include "factr/model/checkpoint.hpp"
#include "factr/train/trainer.hpp"

namespace factr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Flags {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon;
  std::optional<double> rho;
  std::optional<std::string> variant;
  std::optional<double> mask_ratio;
  std::size_t days = 1095;
  std::vector<std::size_t> windows;
  std::string component = "all";
  bool force = false;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("FACTR_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("FACTR_SEED must be a non-negative integer, got '") + s + "'");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Config file (or `base`) with command-line overrides, then validated.
/// Seed precedence: --seed, config, FACTR_SEED, 0.
RunConfig resolve_config(const Flags& f, json base = json::object()) {
  json j = f.config.empty() ? std::move(base) : read_json_file(f.config);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (f.horizon) j["horizon"] = *f.horizon;
  if (f.rho) j["rho"] = *f.rho;
  if (f.variant) j["variant"] = *f.variant;
  if (f.mask_ratio) j["mask_ratio"] = *f.mask_ratio;
  if (f.seed) j["seed"] = *f.seed;
  else if (!j.contains("seed"))
    if (auto s = env_seed()) j["seed"] = *s;
  return parse_config(j);
}

struct Prepared {
  data::SeriesDataset norm;
  data::NormStats stats;
  data::RowRange train, val, test;
  std::string name;
  bool calendar = false;
};

Prepared prepare_data(RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("config key 'data': a dataset path is required");
  Prepared p;
  const auto raw = data::load_csv_dataset(cfg.data, data::Frequency::parse(cfg.frequency));
  const auto borders = data::chronological_split(raw.rows(), cfg.split_spec(), raw.frequency);
  const std::size_t l = cfg.model.lookback;
  p.train = data::split_range(borders, data::Split::Train, l);
  p.val = data::split_range(borders, data::Split::Val, l);
  p.test = data::split_range(borders, data::Split::Test, l);
  p.stats = data::fit_norm_stats(raw, p.train);
  p.norm = data::apply_norm(raw, p.stats);
  p.name = fs::path(cfg.data).stem().string();
  p.calendar = cfg.calendar && raw.timestamps.has_value();
  cfg.model.channels = raw.channels();
  cfg.model.dynamic_cardinalities = p.calendar ? data::kCalendarCardinalities : std::vector<std::size_t>{};
  if (!cfg.model.static_cardinalities.empty() || cfg.model.static_continuous > 0)
    throw ConfigError("config keys 'static_cardinalities'/'static_continuous': static attributes are only "
                      "available through the library API");
  cfg.model.validate();
  return p;
}

data::WindowOptions window_options(const RunConfig& cfg, const Prepared& p, bool shuffle) {
  data::WindowOptions o;
  o.lookback = cfg.model.lookback;
  o.horizon = cfg.model.horizon;
  o.batch = cfg.batch;
  o.shuffle = shuffle;
  o.seed = cfg.seed;
  o.calendar = p.calendar;
  return o;
}

train::EpochCallback progress(std::ostream& err, const std::string& phase) {
  return [&err, phase](const train::EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s epoch %zu  train %.6f  val %.6f  lr %.3g  (%.1f s)\n", phase.c_str(),
                  r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds);
    err << buf << std::flush;
  };
}

json norm_json(const data::NormStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

json result_json(const train::TrainResult& r) {
  return {{"best_epoch", r.best_epoch}, {"best_val", r.best_val}, {"epochs", r.log.epochs.size()},
          {"stopped_early", r.stopped_early}};
}

class Run {
 public:
  Run(std::string command, const std::string& dir, bool force, std::ostream& out)
      : dir_(dir), out_(out) {
    manifest_.command = std::move(command);
    prepare_output_dir(dir, force);
  }
  void input(const std::string& path) {
    if (!path.empty()) manifest_.inputs.push_back(path);
  }
  void config(const RunConfig& cfg) {
    manifest_.config = cfg.to_json();
    manifest_.seed = cfg.seed;
  }
  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }
  void text(const std::string& name, const std::string& body) {
    write_text(path(name), body);
    manifest_.outputs.push_back(name);
  }
  void checkpoint(const std::string& name, const model::Checkpoint& ck) {
    model::write_checkpoint(ck, path(name));
    manifest_.outputs.push_back(name);
  }
  void files(const std::vector<std::string>& paths) {
    for (const auto& p : paths) manifest_.outputs.push_back(fs::path(p).lexically_relative(dir_).string());
  }
  void finish() {
    write_text(path("manifest.json"), manifest_.render());
    out_ << "wrote " << manifest_.outputs.size() + 1 << " files to " << dir_ << "\n";
  }

 private:
  std::string dir_;
  std::ostream& out_;
  Manifest manifest_;
};

template <typename Real>
void write_report(Run& run, model::FaCTRModel<Real>& m, const RunConfig& cfg, const Prepared& p,
                  std::ostream& out) {
  data::WindowIterator<Real> test(p.norm, p.test, window_options(cfg, p, false));
  eval::EvalOptions eo;
  eo.channel_names = p.norm.channel_names;
  if (cfg.raw_metrics) eo.raw = &p.stats;
  const auto rep = eval::evaluate(m, test, eo);
  run.text("report.json", rep.to_json().dump(2) + "\n");
  run.text("channel_errors.tsv", eval::channel_error_tsv(eval::per_channel_errors(rep)));
  char buf[128];
  std::snprintf(buf, sizeof buf, "test mse %.6f  mae %.6f  (%zu windows)\n", rep.mse, rep.mae, rep.windows);
  out << buf;
}

template <typename Real>
int cmd_train(RunConfig cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  auto p = prepare_data(cfg);
  Run run("train", f.out, f.force, out);
  run.input(f.config);
  run.input(cfg.data);
  run.config(cfg);
  model::FaCTRModel<Real> m(cfg.model);
  data::WindowIterator<Real> tr(p.norm, p.train, window_options(cfg, p, true));
  data::WindowIterator<Real> va(p.norm, p.val, window_options(cfg, p, false));
  const auto res = train::train(m, tr, va, cfg.train, progress(err, "train"));
  run.text("train_log.tsv", res.log.tsv(false));
  run.checkpoint("best.ckpt", model::make_checkpoint(m, {{"run", cfg.to_json()},
                                                          {"norm", norm_json(p.stats)},
                                                          {"train", result_json(res)}}));
  write_report(run, m, cfg, p, out);
  run.finish();
  return kExitOk;
}

template <typename Real>
int cmd_eval(RunConfig cfg, const model::Checkpoint& ck, const Flags& f, std::ostream& out) {
  auto p = prepare_data(cfg);
  auto arch = [](nlohmann::json j) {
    j.erase("seed");
    j.erase("dropout");
    return j;
  };
  if (arch(cfg.model.to_json()) != arch(ck.model_config().to_json()))
    throw ConfigError("checkpoint architecture does not match the config applied to '" + cfg.data + "'");
  Run run("eval", f.out, f.force, out);
  run.input(f.checkpoint);
  run.input(f.config);
  run.input(cfg.data);
  run.config(cfg);
  auto m = model::model_from_checkpoint<Real>(ck);
  write_report(run, m, cfg, p, out);
  run.finish();
  return kExitOk;
}

template <typename Real>
int cmd_pretrain(RunConfig cfg, const Flags& f, std::ostream& out, std::ostream& err) {
  cfg.model.horizon = cfg.model.lookback;
  auto p = prepare_data(cfg);
  Run run("pretrain", f.out, f.force, out);
  run.input(f.config);
  run.input(cfg.data);
  run.config(cfg);
  model::FaCTRModel<Real> m(cfg.model);
  auto wo = window_options(cfg, p, true);
  wo.horizon = 1;  // targets are the inputs themselves
  data::WindowIterator<Real> tr(p.norm, p.train, wo);
  wo.shuffle = false;
  data::WindowIterator<Real> va(p.norm, p.val, wo);
  const auto res = train::pretrain_masked(m, tr, va, cfg.train, progress(err, "pretrain"));
  run.text("pretrain_log.tsv", res.log.tsv(false));
  run.checkpoint("encoder.ckpt", model::make_checkpoint(m, {{"run", cfg.to_json()},
                                                             {"norm", norm_json(p.stats)},
                                                             {"pretrain", result_json(res)}}));
  const double first = res.log.epochs.front().train_loss, last = res.log.epochs.back().train_loss;
  char buf[160];
  std::snprintf(buf, sizeof buf, "reconstruction loss %.6f -> %.6f (%.1f%% lower)\n", first, last,
                100.0 * (1.0 - last / first));
  out << buf;
  run.finish();
  return kExitOk;
}

template <typename Real>
int cmd_transfer(RunConfig cfg, const model::Checkpoint& pre, train::TransferMode mode, const Flags& f,
                 std::ostream& out, std::ostream& err) {
  auto p = prepare_data(cfg);
  const std::string name = mode == train::TransferMode::Probe ? "probe" : "finetune";
  Run run(name, f.out, f.force, out);
  run.input(f.checkpoint);
  run.input(f.config);
  run.input(cfg.data);
  run.config(cfg);
  model::FaCTRModel<Real> m(cfg.model);
  data::WindowIterator<Real> tr(p.norm, p.train, window_options(cfg, p, true));
  data::WindowIterator<Real> va(p.norm, p.val, window_options(cfg, p, false));
  train::TransferOptions to;
  to.mode = mode;
  to.probe_epochs = cfg.probe_epochs;
  to.finetune_epochs = cfg.finetune_epochs;
  const auto res = train::transfer_train(m, pre, tr, va, cfg.train, to, progress(err, name));
  run.text("probe_log.tsv", res.probe.log.tsv(false));
  json meta = {{"run", cfg.to_json()}, {"norm", norm_json(p.stats)}, {"probe", result_json(res.probe)}};
  if (res.finetune) {
    run.text("finetune_log.tsv", res.finetune->log.tsv(false));
    meta["finetune"] = result_json(*res.finetune);
  }
  run.checkpoint("best.ckpt", model::make_checkpoint(m, meta));
  write_report(run, m, cfg, p, out);
  run.finish();
  return kExitOk;
}

template <typename Real>
int cmd_inspect(RunConfig cfg, const model::Checkpoint& ck, const Flags& f, bool forecasts, std::ostream& out) {
  auto p = prepare_data(cfg);
  auto m = model::model_from_checkpoint<Real>(ck);
  Run run(forecasts ? "dump" : "inspect", f.out, f.force, out);
  run.input(f.checkpoint);
  run.input(f.config);
  run.input(cfg.data);
  run.config(cfg);
  data::WindowIterator<Real> test(p.norm, p.test, window_options(cfg, p, false));
  const auto ids = f.windows.empty() ? cfg.windows : f.windows;
  if (forecasts) {
    eval::DumpOptions d;
    d.dataset = p.name;
    d.channel_names = p.norm.channel_names;
    run.files(eval::forecast_dump(m, test, ids, f.out, d));
  } else {
    for (auto id : ids) {
      const auto ex = eval::interpret_window(m, test, id, p.norm.channel_names);
      run.files(eval::write_interpretability(ex, f.out));
    }
  }
  run.finish();
  return kExitOk;
}

model::Checkpoint load_checkpoint(const Flags& f) {
  if (f.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return model::read_checkpoint(f.checkpoint);
}

/// The run config stored in a checkpoint, with a --config file replacing it.
RunConfig config_for_checkpoint(const Flags& f, const model::Checkpoint& ck) {
  json base = json::object();
  if (ck.header.contains("meta") && ck.header["meta"].contains("run")) base = ck.header["meta"]["run"];
  return resolve_config(f, base);
}

bool is_double(const model::Checkpoint& ck) {
  return !ck.tensors.empty() && ck.tensors.front().dtype == model::DType::F64;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  if (f.out.empty()) throw ConfigError("--out <file.csv> is required");
  if (fs::exists(f.out) && !f.force) throw ConfigError("'" + f.out + "' exists; pass --force to overwrite");
  std::uint64_t seed = 0;
  if (f.seed) seed = *f.seed;
  else if (auto s = env_seed()) seed = *s;
  const auto parent = fs::path(f.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const auto ds = data::synth_retail_generate(f.days, seed);
  data::write_csv_dataset(ds, f.out);
  Manifest m;
  m.command = "synth";
  m.config = {{"days", f.days}, {"seed", seed}};
  m.seed = seed;
  m.outputs = {fs::path(f.out).filename().string()};
  write_text(f.out + ".manifest.json", m.render());
  out << "wrote " << ds.rows() << " days x " << ds.channels() << " channels to " << f.out << "\n";
  return kExitOk;
}

int cmd_params(const Flags& f, std::ostream& out) {
  eval::ParamAudit audit;
  json cfg_echo;
  if (!f.checkpoint.empty()) {
    const auto ck = model::read_checkpoint(f.checkpoint);
    audit = eval::audit_params(ck);
    cfg_echo = ck.model_config().to_json();
  } else {
    auto cfg = resolve_config(f);
    if (!cfg.data.empty()) prepare_data(cfg);
    model::FaCTRModel<float> m(cfg.model);
    audit = eval::audit_params(model::make_checkpoint(m));
    cfg_echo = cfg.model.to_json();
  }
  out << audit.text();
  if (!f.out.empty()) {
    Run run("params", f.out, f.force, out);
    run.input(f.config);
    run.input(f.checkpoint);
    run.text("params.json", json{{"model", cfg_echo}, {"audit", audit.to_json()}}.dump(2) + "\n");
    run.finish();
  }
  return kExitOk;
}

int cmd_bench(const Flags& f, std::ostream& out) {
  std::vector<eval::BenchComponent> which;
  if (f.component == "all") which = {eval::BenchComponent::Fm, eval::BenchComponent::Temporal};
  else which = {eval::parse_bench_component(f.component)};
  std::string tsv;
  for (auto c : which) {
    const auto sizes = c == eval::BenchComponent::Fm ? std::vector<std::size_t>{64, 128, 256, 512}
                                                     : std::vector<std::size_t>{16, 32, 64, 128};
    eval::BenchOptions o;
    if (f.seed) o.seed = *f.seed;
    tsv += eval::scaling_benchmark(c, sizes, o).tsv();
  }
  out << tsv;
  if (!f.out.empty()) {
    Run run("bench", f.out, f.force, out);
    run.text("bench.tsv", tsv);
    run.finish();
  }
  return kExitOk;
}

int dispatch(const std::string& sub, const Flags& f, std::ostream& out, std::ostream& err) {
  if (sub == "synth") return cmd_synth(f, out);
  if (sub == "params") return cmd_params(f, out);
  if (sub == "bench") return cmd_bench(f, out);
  if (sub == "train" || sub == "pretrain") {
    if (f.config.empty()) throw ConfigError("--config is required");
    auto cfg = resolve_config(f);
    const bool dbl = cfg.precision == Precision::Float64;
    if (sub == "train") return dbl ? cmd_train<double>(cfg, f, out, err) : cmd_train<float>(cfg, f, out, err);
    return dbl ? cmd_pretrain<double>(cfg, f, out, err) : cmd_pretrain<float>(cfg, f, out, err);
  }
  if (sub == "probe" || sub == "finetune") {
    if (f.config.empty()) throw ConfigError("--config is required (target dataset)");
    const auto pre = load_checkpoint(f);
    auto cfg = resolve_config(f);
    const auto mode = sub == "probe" ? train::TransferMode::Probe : train::TransferMode::Finetune;
    if (cfg.precision == Precision::Float64) return cmd_transfer<double>(cfg, pre, mode, f, out, err);
    return cmd_transfer<float>(cfg, pre, mode, f, out, err);
  }
  const auto ck = load_checkpoint(f);
  auto cfg = config_for_checkpoint(f, ck);
  const bool dbl = is_double(ck);
  if (sub == "eval") return dbl ? cmd_eval<double>(cfg, ck, f, out) : cmd_eval<float>(cfg, ck, f, out);
  const bool forecasts = sub == "dump";
  return dbl ? cmd_inspect<double>(cfg, ck, f, forecasts, out) : cmd_inspect<float>(cfg, ck, f, forecasts, out);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"FaCTR forecasting engine", "factr"};
  app.require_subcommand(1);
  Flags f;
  struct Spec {
    const char* name;
    const char* help;
  };
  const std::vector<Spec> subs = {
      {"train", "train a forecaster and evaluate it on the test split"},
      {"eval", "evaluate a checkpoint on the test split"},
      {"pretrain", "masked-patch pretraining of an encoder"},
      {"probe", "train a fresh head on a pretrained encoder"},
      {"finetune", "probe, then train every parameter"},
      {"synth", "write the synthetic retail dataset"},
      {"inspect", "export attention maps and FM scores for test windows"},
      {"dump", "write forecast-versus-actual CSV and SVG files for test windows"},
      {"params", "parameter breakdown with the closed-form cross-check"},
      {"bench", "complexity-scaling benchmark"},
  };
  for (const auto& s : subs) {
    auto* c = app.add_subcommand(s.name, s.help);
    const std::string n = s.name;
    if (n != "synth" && n != "bench") c->add_option("--config", f.config, "flat JSON config");
    if (n != "synth" && n != "bench" && n != "train" && n != "pretrain")
      c->add_option("--checkpoint", f.checkpoint, "checkpoint file");
    c->add_option("--out", f.out, n == "synth" ? "output CSV file" : "output directory");
    c->add_option("--seed", f.seed, "random seed (falls back to FACTR_SEED)");
    if (n != "synth" && n != "bench") {
      c->add_option("--horizon", f.horizon, "forecast horizon");
      c->add_option("--rho", f.rho, "SAM radius");
      c->add_option("--variant", f.variant, "temporal-only | plus-fm | full");
    }
    if (n == "pretrain") c->add_option("--mask-ratio", f.mask_ratio, "fraction of patches masked");
    if (n == "synth") c->add_option("--days", f.days, "number of days (>= 730)");
    if (n == "inspect" || n == "dump") c->add_option("--window", f.windows, "test window id (repeatable)");
    if (n == "bench") c->add_option("--component", f.component, "fm | temporal | all");
    c->add_flag("--force", f.force, "overwrite a non-empty output location");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (app.exit(e, out, err) == 0) return kExitOk;
    err << "\n" << app.help();
    return kExitInvalid;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    return dispatch(sub, f, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace factr::cli
