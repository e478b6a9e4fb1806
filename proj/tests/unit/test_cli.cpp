#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "factr/cli/app.hpp"
#include "factr/cli/config.hpp"
#include "factr/cli/manifest.hpp"
#include "factr/common/errors.hpp"

using namespace factr;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result factr_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "factr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// Runs each test case inside a fresh scratch directory.
struct Scratch {
  fs::path dir, prev;
  explicit Scratch(const std::string& name) {
    dir = fs::temp_directory_path() / ("factr_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    prev = fs::current_path();
    fs::current_path(dir);
  }
  ~Scratch() {
    fs::current_path(prev);
    fs::remove_all(dir);
  }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kSmall =
    R"({"data": "synth.csv", "frequency": "d", "lookback": 64, "patch_len": 16, "stride": 16,
        "horizon": 14, "d_model": 8, "r_fm": 4, "r_sp": 4, "max_epochs": 2, "lr": 0.001, "seed": 3})";

}  // namespace

TEST_CASE("config parsing") {
  auto c = cli::parse_config(nlohmann::json::object());
  CHECK(c.model.lookback == 512);
  CHECK(c.model.patch == 32);
  CHECK(c.model.stride == 32);
  CHECK(c.model.d_model == 32);
  CHECK(c.model.r_fm == 8);
  CHECK(c.model.r_sp == 8);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.patience == 10);
  CHECK(c.train.max_epochs == 150);

  c = cli::parse_config({{"data", "x/ETTh2.csv"}, {"rho", 0.8}, {"horizon", 96}});
  CHECK(c.train.rho == 0.8);
  CHECK(c.split_spec().mode == data::SplitMode::Months);
  CHECK(c.split_spec().train == 12);
  CHECK(cli::parse_config({{"data", "weather.csv"}}).split_spec().mode == data::SplitMode::Ratio);

  auto err = [](const nlohmann::json& j) {
    try {
      cli::parse_config(j);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(err({{"patch_len", 33}}).find("patch_len 33") != std::string::npos);
  CHECK(err({{"lookbak", 512}}).find("'lookbak'") != std::string::npos);
  CHECK(err({{"lr", "fast"}}).find("'lr'") != std::string::npos);
  CHECK(err({{"horizon", -4}}).find("'horizon'") != std::string::npos);
  CHECK(err({{"split_sizes", {1, 2}}}).find("'split_sizes'") != std::string::npos);
  CHECK(err({{"windows", {1, "a"}}}).find("'windows[1]'") != std::string::npos);
  CHECK(err({{"variant", "huge"}}).find("'variant'") != std::string::npos);
  CHECK(err(nlohmann::json::array()).find("object") != std::string::npos);

  SUBCASE("round trip through the echo") {
    auto d = cli::parse_config({{"seed", 9}, {"variant", "plus-fm"}, {"dropout", 0.2}});
    auto back = cli::parse_config(d.to_json());
    CHECK(back.to_json() == d.to_json());
    CHECK(back.model.seed == 9);
    CHECK(back.train.seed == 9);
  }
  SUBCASE("every key is documented in the echo") {
    auto j = cli::parse_config(nlohmann::json::object()).to_json();
    for (const auto& k : cli::config_keys()) CHECK_MESSAGE(j.contains(k), k);
  }
}

TEST_CASE("git blob hash") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(cli::git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(cli::git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("subcommands and exit codes") {
  Scratch s("run");
  auto r = factr_cli({"synth", "--days", "1095", "--seed", "42", "--out", "synth.csv"});
  REQUIRE(r.code == 0);
  const auto first = slurp("synth.csv");
  CHECK(factr_cli({"synth", "--days", "1095", "--seed", "42", "--out", "synth.csv"}).code == 1);
  CHECK(factr_cli({"synth", "--days", "1095", "--seed", "42", "--out", "synth.csv", "--force"}).code == 0);
  CHECK(slurp("synth.csv") == first);
  CHECK(factr_cli({"synth", "--days", "100", "--out", "short.csv"}).code == 1);

  write("small.json", kSmall);
  r = factr_cli({"params", "--config", "small.json"});
  CHECK(r.code == 0);
  CHECK(r.out.find("analytic") != std::string::npos);

  r = factr_cli({"train", "--config", "small.json", "--out", "a"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("test mse") != std::string::npos);
  for (auto f : {"best.ckpt", "train_log.tsv", "report.json", "channel_errors.tsv", "manifest.json"})
    CHECK_MESSAGE(fs::exists(fs::path("a") / f), f);
  CHECK(factr_cli({"train", "--config", "small.json", "--out", "b"}).code == 0);
  for (auto f : {"best.ckpt", "train_log.tsv", "manifest.json"}) CHECK(slurp(fs::path("a") / f) == slurp(fs::path("b") / f));
  CHECK(factr_cli({"train", "--config", "small.json", "--out", "a"}).code == 1);

  auto manifest = nlohmann::json::parse(slurp("a/manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["inputs"][1]["path"] == "synth.csv");
  CHECK(manifest["inputs"][1]["sha1"] == cli::git_blob_sha1(first));

  r = factr_cli({"eval", "--checkpoint", "a/best.ckpt", "--out", "ev"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(nlohmann::json::parse(slurp("ev/report.json"))["mse"] ==
        nlohmann::json::parse(slurp("a/report.json"))["mse"]);

  CHECK(factr_cli({"train", "--config", "small.json", "--out", "c", "--seed", "4"}).code == 0);
  CHECK(slurp("c/train_log.tsv") != slurp("a/train_log.tsv"));
  setenv("FACTR_SEED", "4", 1);
  auto j = nlohmann::json::parse(kSmall);
  j.erase("seed");
  write("noseed.json", j.dump());
  CHECK(factr_cli({"train", "--config", "noseed.json", "--out", "d"}).code == 0);
  unsetenv("FACTR_SEED");
  CHECK(slurp("d/train_log.tsv") == slurp("c/train_log.tsv"));

  r = factr_cli({"dump", "--checkpoint", "a/best.ckpt", "--out", "dm", "--window", "100000"});
  CHECK(r.code == 1);
  CHECK(r.err.find("valid range") != std::string::npos);
  CHECK(factr_cli({"inspect", "--checkpoint", "a/best.ckpt", "--out", "in", "--window", "2"}).code == 0);
  CHECK(fs::exists("in/window2_fm.csv"));

  write("bad.json", R"({"data": "synth.csv", "lookback": 512, "patch_len": 33})");
  CHECK(factr_cli({"train", "--config", "bad.json", "--out", "e"}).code == 1);
  CHECK(factr_cli({"train", "--config", "small.json", "--out", "f", "--variant", "bogus"}).code == 1);
  r = factr_cli({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("Subcommands") != std::string::npos);
  write("trunc.ckpt", slurp("a/best.ckpt").substr(0, 40));
  CHECK(factr_cli({"eval", "--checkpoint", "trunc.ckpt", "--out", "g"}).code == 2);
  CHECK(factr_cli({"eval", "--checkpoint", "missing.ckpt", "--out", "h"}).code == 2);
}

TEST_CASE("pretrain, probe and finetune") {
  Scratch s("transfer");
  REQUIRE(factr_cli({"synth", "--days", "900", "--seed", "1", "--out", "synth.csv"}).code == 0);
  write("small.json", kSmall);
  auto r = factr_cli({"pretrain", "--config", "small.json", "--out", "pre", "--mask-ratio", "0.45"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("reconstruction loss") != std::string::npos);
  r = factr_cli({"probe", "--config", "small.json", "--checkpoint", "pre/encoder.ckpt", "--out", "pr"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists("pr/probe_log.tsv"));
  r = factr_cli({"finetune", "--config", "small.json", "--checkpoint", "pre/encoder.ckpt", "--out", "ft"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists("ft/finetune_log.tsv"));
  write("wide.json", R"({"data": "synth.csv", "frequency": "d", "lookback": 128, "patch_len": 16, "stride": 16,
        "horizon": 14, "d_model": 8, "r_fm": 4, "r_sp": 4, "max_epochs": 1})");
  CHECK(factr_cli({"probe", "--config", "wide.json", "--checkpoint", "pre/encoder.ckpt", "--out", "bad"}).code == 1);
}
