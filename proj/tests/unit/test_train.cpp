#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "factr/common/errors.hpp"
#include "factr/data/split.hpp"
#include "factr/data/synth.hpp"
#include "factr/train/trainer.hpp"

using namespace factr;
using namespace factr::train;
using T64 = ad::Tensor<double>;
using Params = std::vector<std::pair<std::string, T64>>;

namespace {

model::ModelConfig small_config(std::size_t channels, std::size_t lookback, std::size_t horizon) {
  model::ModelConfig c;
  c.channels = channels;
  c.lookback = lookback;
  c.patch = 8;
  c.stride = 8;
  c.d_model = 8;
  c.r_fm = 4;
  c.r_sp = 4;
  c.horizon = horizon;
  c.dropout = 0.0;
  c.seed = 3;
  return c;
}

data::SeriesDataset ramp(std::size_t rows) {
  data::SeriesDataset ds;
  std::vector<double> v;
  for (std::size_t r = 0; r < rows; ++r) {
    v.push_back(0.01 * static_cast<double>(r));
    v.push_back(0.004 * static_cast<double>(r) - 1.0);
  }
  ds.values = T64({rows, 2}, v);
  ds.channel_names = {"a", "b"};
  return ds;
}

// Validation targets drift further from anything learnable every epoch.
class DriftingSource : public data::BatchSource<double> {
 public:
  void start_epoch() override {
    ++epoch_;
    done_ = false;
  }
  bool next(data::WindowBatch<double>& out) override {
    if (done_) return false;
    done_ = true;
    out.inputs = T64({4, 2, 16}, 0.0);
    for (std::size_t i = 0; i < out.inputs.numel(); ++i) out.inputs[i] = std::sin(0.3 * static_cast<double>(i));
    out.targets = T64({4, 2, 4}, 1000.0 * epoch_ * epoch_);
    out.starts = {0, 1, 2, 3};
    return true;
  }

 private:
  int epoch_ = 0;
  bool done_ = false;
};

class PoisonedSource : public data::BatchSource<double> {
 public:
  void start_epoch() override { i_ = 0; }
  bool next(data::WindowBatch<double>& out) override {
    if (i_ == 4) return false;
    out.inputs = T64({2, 2, 16}, 0.0);
    for (std::size_t k = 0; k < out.inputs.numel(); ++k) out.inputs[k] = std::cos(0.1 * static_cast<double>(k));
    if (i_ == 2) out.inputs[5] = std::nan("");
    out.targets = T64({2, 2, 4}, 0.0);
    out.starts = {0, 1};
    ++i_;
    return true;
  }

 private:
  std::size_t i_ = 0;
};

struct SynthSplits {
  data::SeriesDataset ds;
  data::RowRange train, val;
};

SynthSplits synth_splits(std::size_t lookback) {
  SynthSplits s;
  auto raw = data::synth_retail_generate(730, 11);
  auto b = data::chronological_split(raw.rows(), data::SplitSpec::ratio(7, 1, 2), raw.frequency);
  s.train = data::split_range(b, data::Split::Train, lookback);
  s.val = data::split_range(b, data::Split::Val, lookback);
  s.ds = data::apply_norm(raw, data::fit_norm_stats(raw, s.train));
  return s;
}

data::WindowOptions window_opts(std::size_t lookback, std::size_t horizon, bool shuffle, std::uint64_t seed) {
  data::WindowOptions o;
  o.lookback = lookback;
  o.horizon = horizon;
  o.batch = 32;
  o.shuffle = shuffle;
  o.seed = seed;
  o.calendar = false;
  return o;
}

}  // namespace

TEST_CASE("losses") {
  auto z = T64::from({2}, {0, 0});
  auto o = T64::from({2}, {1, 1});
  auto m = T64::from({2}, {0, 2});
  CHECK(mse_loss(o, o).item() == 0.0);
  CHECK(mse_loss(z, o).item() == 1.0);
  CHECK(mae_loss(z, o).item() == 1.0);
  CHECK(mse_loss(m, o).item() == 1.0);
  CHECK(mae_loss(m, o).item() == 1.0);
  CHECK_THROWS_AS(mse_loss(z, T64({3})), ad::DimensionError);
  auto s = error_sums(m, o);
  CHECK(s.mse() == 1.0);
  CHECK(s.mae() == 1.0);
}

TEST_CASE("adam") {
  SUBCASE("hand computed first step") {
    Params p = {{"w", T64({1}, 0.0).set_requires_grad()}};
    p[0].second.impl()->grad = {1.0};
    Adam<double> adam;
    adam.step(p, 0.1);
    CHECK(p[0].second[0] == doctest::Approx(-0.1).epsilon(1e-7));
  }
  SUBCASE("zero gradient leaves parameters") {
    Params p = {{"w", T64::from({3}, {1, 2, 3}).set_requires_grad()}};
    p[0].second.impl()->grad = {0, 0, 0};
    Adam<double> adam;
    for (int i = 0; i < 5; ++i) adam.step(p, 0.1);
    CHECK(p[0].second[0] == 1.0);
    CHECK(p[0].second[2] == 3.0);
  }
  SUBCASE("missing gradient names the tensor") {
    Params p = {{"encoder.w", T64({2}, 1.0).set_requires_grad()}};
    Adam<double> adam;
    try {
      adam.step(p, 0.1);
      FAIL("expected contract error");
    } catch (const ad::ContractError& e) {
      CHECK(std::string(e.what()).find("encoder.w") != std::string::npos);
    }
    p[0].second.set_requires_grad(false);
    CHECK_NOTHROW(adam.step(p, 0.1));
  }
}

TEST_CASE("sam") {
  SUBCASE("perturbation has norm rho") {
    Params p = {{"w", T64::from({4}, {0.3, -1, 2, 5}).set_requires_grad()}};
    Adam<double> adam;
    auto info = sam_step<double>(p, [&] { return ad::sum(p[0].second); }, 0.5, adam, 0.01);
    CHECK(info.grad_norm == doctest::Approx(2.0));
    CHECK(std::abs(info.perturb_norm - 0.5) < 1e-12);
  }
  SUBCASE("rho zero is plain adam bit for bit") {
    auto run = [](double rho, bool plain) {
      Params p = {{"w", T64::from({3}, {1, -2, 0.5}).set_requires_grad()}};
      auto c = T64::from({3}, {0.2, 0.4, -0.3});
      auto loss = [&] {
        auto d = ad::sub(p[0].second, c);
        return ad::sum(ad::mul(ad::mul(d, d), ad::add_scalar(ad::mul(d, d), 1.0)));
      };
      Adam<double> adam;
      for (int i = 0; i < 50; ++i) {
        if (plain) {
          p[0].second.zero_grad();
          ad::backward(loss());
          adam.step(p, 0.01);
        } else {
          sam_step<double>(p, loss, rho, adam, 0.01);
        }
      }
      return std::vector<double>(p[0].second.data().begin(), p[0].second.data().end());
    };
    auto a = run(0.0, false), b = run(0.0, true);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 3) == 0);
    auto c = run(0.05, false);
    CHECK(c != a);
  }
  SUBCASE("zero gradient skips the ascent") {
    Params p = {{"w", T64({2}, 0.0).set_requires_grad()}};
    Adam<double> adam;
    auto info = sam_step<double>(p, [&] { return ad::sum(ad::mul(p[0].second, p[0].second)); }, 1.0, adam, 0.1);
    CHECK(info.grad_norm == 0.0);
    CHECK(info.perturb_norm == 0.0);
  }
  SUBCASE("convex quadratic reaches the closed-form minimiser") {
    // f(w) = sum a_i (w_i - c_i)^2, minimiser w = c
    const auto a = T64::from({4}, {1.0, 3.0, 0.5, 2.0});
    const auto c = T64::from({4}, {0.7, -1.2, 2.5, 0.1});
    for (double rho : {0.0, 0.05}) {
      Params p = {{"w", T64({4}, 0.0).set_requires_grad()}};
      auto loss = [&] {
        auto d = ad::sub(p[0].second, c);
        return ad::sum(ad::mul(a, ad::mul(d, d)));
      };
      Adam<double> adam;
      const int steps = 4000;
      for (int i = 0; i < steps; ++i)
        sam_step<double>(p, loss, rho, adam, cosine_warm_restart_lr(i, steps, 1.0, 0.05, 0.0));
      for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p[0].second[i] - c[i]) < 1e-4);
    }
  }
}

TEST_CASE("cosine warm restarts") {
  const double hi = 1e-4, lo = 1e-6;
  // restart epochs are partial sums of the geometric series 10, 20, 40, ...
  std::vector<std::size_t> restarts;
  for (std::size_t k = 0, start = 0, len = 10; k < 4; ++k, start += len, len *= 2) restarts.push_back(start);
  CHECK(restarts == std::vector<std::size_t>{0, 10, 30, 70});
  for (auto e : restarts) CHECK(cosine_warm_restart_lr(e, 10, 2, hi, lo) == doctest::Approx(hi));
  CHECK(cosine_warm_restart_lr(5, 10, 2, hi, lo) == doctest::Approx((hi + lo) / 2));
  CHECK(cosine_warm_restart_lr(20, 10, 2, hi, lo) == doctest::Approx((hi + lo) / 2));
  CHECK(cosine_warm_restart_lr(50, 10, 2, hi, lo) == doctest::Approx((hi + lo) / 2));
  for (std::size_t e = 0; e < 200; ++e) {
    const double v = cosine_warm_restart_lr(e, 10, 2, hi, lo);
    CHECK(v >= lo - 1e-18);
    CHECK(v <= hi + 1e-18);
  }
  CHECK(cosine_warm_restart_lr(9, 10, 2, hi, lo) < cosine_warm_restart_lr(8, 10, 2, hi, lo));
  CHECK_THROWS_AS(cosine_warm_restart_lr(1, 0, 2, hi, lo), ConfigError);
}

TEST_CASE("early stopping on worsening validation") {
  auto c = small_config(2, 16, 4);
  model::FaCTRModel<double> m(c);
  DriftingSource tr, va;
  TrainConfig cfg;
  cfg.patience = 1;
  cfg.max_epochs = 20;
  auto res = factr::train::train(m, tr, va, cfg);
  CHECK(res.log.epochs.size() == 2);
  CHECK(res.best_epoch == 1);
  CHECK(res.stopped_early);
  CHECK(res.log.epochs[1].val_loss > res.log.epochs[0].val_loss);
}

TEST_CASE("non-finite loss names the batch") {
  auto c = small_config(2, 16, 4);
  model::FaCTRModel<double> m(c);
  PoisonedSource tr;
  DriftingSource va;
  TrainConfig cfg;
  cfg.max_epochs = 2;
  try {
    factr::train::train(m, tr, va, cfg);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("batch 2") != std::string::npos);
  }
  CHECK(ad::Tape<double>::active().size() == 0);
}

TEST_CASE("linear signal is learnt") {
  auto ds = ramp(700);
  data::RowRange tr{0, 500}, va{460, 700};
  auto c = small_config(2, 32, 8);
  model::FaCTRModel<float> m(c);
  data::WindowIterator<float> it_tr(ds, tr, window_opts(32, 8, true, 1));
  data::WindowIterator<float> it_va(ds, va, window_opts(32, 8, false, 0));
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.lr_min = 1e-5;
  cfg.max_epochs = 50;
  cfg.seed = 1;
  auto res = factr::train::train(m, it_tr, it_va, cfg);
  CHECK(res.best_val < 1e-3);
  // the model holds the best weights
  CHECK(validation_loss(m, it_va, cfg, 0) == doctest::Approx(res.best_val).epsilon(1e-6));
  for (const auto& e : res.log.epochs) CHECK(e.val_loss >= res.best_val);
}

TEST_CASE("training is deterministic under seed") {
  auto s = synth_splits(32);
  auto run = [&](std::uint64_t seed) {
    auto c = small_config(8, 32, 8);
    c.dropout = 0.1;
    c.seed = seed;
    model::FaCTRModel<float> m(c);
    data::WindowIterator<float> tr(s.ds, s.train, window_opts(32, 8, true, seed));
    data::WindowIterator<float> va(s.ds, s.val, window_opts(32, 8, false, 0));
    TrainConfig cfg;
    cfg.rho = 0.5;
    cfg.lr = 1e-3;
    cfg.max_epochs = 3;
    cfg.seed = seed;
    auto res = factr::train::train(m, tr, va, cfg);
    return std::make_pair(res.log.tsv(false), model::serialize_checkpoint(model::make_checkpoint(m)));
  };
  auto a = run(4), b = run(4), c = run(5);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first != c.first);
  CHECK(a.first.rfind("epoch\ttrain_loss\tval_loss\tlr\n", 0) == 0);
}

TEST_CASE("masked pretraining and transfer") {
  auto s = synth_splits(32);
  auto pc = small_config(8, 32, 32);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.max_epochs = 6;
  cfg.seed = 2;

  SUBCASE("horizon must equal lookback") {
    model::FaCTRModel<float> bad(small_config(8, 32, 8));
    data::WindowIterator<float> tr(s.ds, s.train, window_opts(32, 8, true, 1));
    CHECK_THROWS_AS(pretrain_masked(bad, tr, tr, cfg), ConfigError);
  }

  SUBCASE("easier task has lower loss") {
    auto first_epoch = [&](double ratio) {
      model::FaCTRModel<float> m(pc);
      auto o = window_opts(32, 1, true, 1);
      o.batch = 4;
      data::WindowIterator<float> tr(s.ds, s.train, o);
      data::WindowIterator<float> va(s.ds, s.val, window_opts(32, 1, false, 0));
      TrainConfig c1 = cfg;
      c1.max_epochs = 1;
      c1.mask_ratio = ratio;
      return pretrain_masked(m, tr, va, c1).log.epochs[0].train_loss;
    };
    CHECK(first_epoch(0.01) < first_epoch(0.45));
  }

  model::FaCTRModel<float> pre(pc);
  data::WindowIterator<float> ptr(s.ds, s.train, window_opts(32, 1, true, 1));
  data::WindowIterator<float> pva(s.ds, s.val, window_opts(32, 1, false, 0));
  auto pres = pretrain_masked(pre, ptr, pva, cfg);
  CHECK(pres.log.epochs.back().train_loss < pres.log.epochs.front().train_loss);
  auto encoder = model::make_checkpoint(pre, {}, {"head."});
  CHECK(encoder.find("head.weight") == nullptr);

  auto target_cfg = small_config(8, 32, 8);
  data::WindowIterator<float> tr(s.ds, s.train, window_opts(32, 8, true, 3));
  data::WindowIterator<float> va(s.ds, s.val, window_opts(32, 8, false, 0));
  TransferOptions topt;
  topt.probe_epochs = 2;
  topt.finetune_epochs = 2;

  SUBCASE("probe freezes the encoder bit for bit") {
    model::FaCTRModel<float> m(target_cfg);
    transfer_train(m, encoder, tr, va, cfg, topt);
    for (const auto& t : encoder.tensors) {
      const auto& p = m.params().at(t.name);
      for (std::size_t i = 0; i < p.numel(); ++i)
        REQUIRE(p[i] == static_cast<float>(t.values[i]));
    }
  }
  SUBCASE("finetune moves the encoder") {
    model::FaCTRModel<float> m(target_cfg);
    topt.mode = TransferMode::Finetune;
    auto r = transfer_train(m, encoder, tr, va, cfg, topt);
    CHECK(r.finetune.has_value());
    const auto& p = m.params().at("temporal.q.weight");
    const auto* t = encoder.find("temporal.q.weight");
    bool moved = false;
    for (std::size_t i = 0; i < p.numel(); ++i) moved |= p[i] != static_cast<float>(t->values[i]);
    CHECK(moved);
  }
  SUBCASE("channel mismatch is refused") {
    model::FaCTRModel<float> m(small_config(7, 32, 8));
    try {
      transfer_train(m, encoder, tr, va, cfg, topt);
      FAIL("expected config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("re-initialise") != std::string::npos);
    }
  }
}
