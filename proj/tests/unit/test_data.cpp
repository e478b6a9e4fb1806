#include "doctest.h"

#include <cmath>
#include <set>
#include <string>

#include "factr/common/errors.hpp"
#include "factr/data/dataset.hpp"
#include "factr/data/masking.hpp"
#include "factr/data/split.hpp"
#include "factr/data/synth.hpp"
#include "factr/data/windows.hpp"

using namespace factr;
using namespace factr::data;

namespace {

// Zeller's congruence, shifted so Monday = 0.
int weekday_oracle(int y, int m, int d) {
  if (m < 3) {
    m += 12;
    y -= 1;
  }
  const int k = y % 100, j = y / 100;
  const int h = (d + 13 * (m + 1) / 5 + k + k / 4 + j / 4 + 5 * j) % 7;  // 0 = Saturday
  return (h + 5) % 7;
}

SeriesDataset ramp_dataset(std::size_t rows, std::size_t channels) {
  SeriesDataset ds;
  std::vector<double> v(rows * channels);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channels; ++c) v[r * channels + c] = 1000.0 * c + r;
  ds.values = ad::Tensor<double>({rows, channels}, v);
  for (std::size_t c = 0; c < channels; ++c) ds.channel_names.push_back("x" + std::to_string(c));
  ds.frequency = Frequency{3600};
  std::vector<std::int64_t> ts(rows);
  for (std::size_t r = 0; r < rows; ++r) ts[r] = parse_timestamp("2016-07-01 00:00:00") + 3600 * r;
  ds.timestamps = ts;
  return ds;
}

}  // namespace

TEST_CASE("frequency parsing") {
  CHECK(Frequency::parse("h").seconds == 3600);
  CHECK(Frequency::parse("1h").seconds == 3600);
  CHECK(Frequency::parse("15min").seconds == 900);
  CHECK(Frequency::parse("10min").seconds == 600);
  CHECK(Frequency::parse("d").seconds == 86400);
  CHECK(Frequency::parse("15min").str() == "15min");
  CHECK_THROWS_AS(Frequency::parse("fortnight"), ConfigError);
}

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("1970-01-01") == 0);
  CHECK(parse_timestamp("1970-01-02 01:00:00") == 86400 + 3600);
  CHECK(parse_timestamp("2016-07-01T00:00") == parse_timestamp("2016-07-01 00:00:00"));
  CHECK(format_timestamp(parse_timestamp("2020-02-29 13:45:10")) == "2020-02-29 13:45:10");
  CHECK_THROWS_AS(parse_timestamp("2019-02-29"), DataError);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), DataError);
}

TEST_CASE("csv parsing") {
  const std::string ok =
      "date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,3,4.5\n2016-07-01 02:00:00,-1,0\n";
  auto ds = parse_csv_dataset(ok, Frequency{3600});
  CHECK(ds.rows() == 3);
  CHECK(ds.channels() == 2);
  CHECK(ds.at(1, 1) == 4.5);
  CHECK(ds.channel_names[0] == "a");
  REQUIRE(ds.timestamps);

  SUBCASE("round trip") {
    auto again = parse_csv_dataset(format_csv_dataset(ds), Frequency{3600});
    CHECK(again.rows() == 3);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 2; ++c) CHECK(again.at(r, c) == ds.at(r, c));
    CHECK(*again.timestamps == *ds.timestamps);
  }

  SUBCASE("no date column") {
    auto nd = parse_csv_dataset("a\n1\n2\n", Frequency{3600});
    CHECK_FALSE(nd.timestamps.has_value());
    CHECK_FALSE(calendar_covariates(nd.timestamps, 0, 2).has_value());
  }

  SUBCASE("errors name the row") {
    auto message = [](const std::string& text) {
      try {
        parse_csv_dataset(text, Frequency{3600});
      } catch (const DataError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("date,a\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,abc\n").find("row 1") !=
          std::string::npos);
    CHECK(message("date,a\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,\n").find("row 1") !=
          std::string::npos);
    CHECK(message("date,a\n2016-07-01 01:00:00,1\n2016-07-01 00:00:00,2\n").find("row 1") !=
          std::string::npos);
    CHECK(message("date,a\n2016-07-01 00:00:00,1\n2016-07-01 03:00:00,2\n").find("gap") !=
          std::string::npos);
    CHECK(message("date,a\n").find("no data rows") != std::string::npos);
  }
}

TEST_CASE("month split reproduces the hourly ETT borders") {
  auto b = chronological_split(17420, SplitSpec::months(12, 4, 4), Frequency{3600});
  CHECK(b.train_end == 8640);
  CHECK(b.val_end - b.train_end == 2880);
  CHECK(b.test_end - b.val_end == 2880);

  auto m = chronological_split(69680, SplitSpec::months(12, 4, 4), Frequency{900});
  CHECK(m.train_end == 12 * 30 * 96);
  CHECK(m.test_end == 20 * 30 * 96);
}

TEST_CASE("ratio split") {
  auto b = chronological_split(1000, SplitSpec::ratio(0.7, 0.1, 0.2), Frequency{3600});
  CHECK(b.train_end == 700);
  CHECK(b.val_end == 800);
  CHECK(b.test_end == 1000);

  for (std::size_t rows : {37u, 101u, 52696u, 1460u}) {
    auto s = chronological_split(rows, SplitSpec::ratio(7, 1, 2), Frequency{86400});
    const std::size_t tr = rows * 7 / 10, va = rows / 10;
    CHECK(s.train_end == tr);
    CHECK(s.val_end == tr + va);
    CHECK(s.test_end == rows);
  }
  CHECK_THROWS_AS(chronological_split(3, SplitSpec::ratio(0.7, 0.1, 0.2), Frequency{3600}),
                  ConfigError);
  CHECK_THROWS_AS(chronological_split(100, SplitSpec::ratio(0.7, 0, 0.3), Frequency{3600}),
                  ConfigError);
}

TEST_CASE("split ranges reach back for context only") {
  SplitBorders b{700, 800, 1000};
  auto tr = split_range(b, Split::Train, 96);
  auto va = split_range(b, Split::Val, 96);
  auto te = split_range(b, Split::Test, 96);
  CHECK(tr.begin == 0);
  CHECK(tr.end == 700);
  CHECK(va.begin == 604);
  CHECK(va.end == 800);
  CHECK(te.begin == 704);
  CHECK(te.end == 1000);
  // every target of the val stream lies inside [700, 800)
  const std::size_t l = 96, t = 24;
  const std::size_t n = window_count(va.size(), l, t);
  CHECK(va.begin + l >= b.train_end);
  CHECK(va.begin + (n - 1) + l + t == va.end);
}

TEST_CASE("norm stats fit on train only and invert") {
  auto ds = ramp_dataset(200, 3);
  RowRange train{0, 100};
  auto s = fit_norm_stats(ds, train);
  // mean of 0..99 is 49.5, biased variance (n^2 - 1) / 12
  CHECK(s.mean[0] == doctest::Approx(49.5));
  CHECK(s.mean[2] == doctest::Approx(2049.5));
  CHECK(s.std[1] == doctest::Approx(std::sqrt((100.0 * 100.0 - 1.0) / 12.0)));
  auto z = apply_norm(ds, s);
  auto back = invert_norm(z, s);
  double worst = 0;
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back.at(r, c) - ds.at(r, c)));
  CHECK(worst < 1e-6);

  SeriesDataset flat = ds;
  flat.values = ad::Tensor<double>({200, 3}, 5.0);
  CHECK(fit_norm_stats(flat, train).std[0] == 1e-8);
}

TEST_CASE("window counts") {
  CHECK(window_count(2880 + 512, 512, 96) == 2880 - 96 + 1);
  CHECK(window_count(1000, 512, 96) == 1000 - 512 - 96 + 1);
  CHECK(window_count(608, 512, 96) == 1);
  CHECK(window_count(607, 512, 96) == 0);
  CHECK(window_count(1000, 100, 10, 7) == (1000 - 110) / 7 + 1);

  auto ds = ramp_dataset(400, 2);
  for (std::size_t t : {1u, 24u, 48u}) {
    WindowOptions o;
    o.lookback = 64;
    o.horizon = t;
    o.batch = 17;
    WindowIterator<float> it(ds, {50, 400}, o);
    CHECK(it.window_count() == 350 - 64 - t + 1);
    std::size_t seen = 0, batches = 0;
    WindowBatch<float> wb;
    while (it.next(wb)) {
      seen += wb.size();
      ++batches;
    }
    CHECK(seen == it.window_count());
    CHECK(batches == it.batch_count());
  }
}

TEST_CASE("windows carry the right rows") {
  auto ds = ramp_dataset(300, 3);
  WindowOptions o;
  o.lookback = 32;
  o.horizon = 8;
  o.batch = 4;
  WindowIterator<double> it(ds, {10, 300}, o);
  auto wb = it.gather({0, 5});
  CHECK(wb.inputs.shape() == ad::Shape{2, 3, 32});
  CHECK(wb.targets.shape() == ad::Shape{2, 3, 8});
  CHECK(wb.starts[1] == 15);
  // ramp value = 1000 c + row
  CHECK(wb.inputs[(1 * 3 + 2) * 32 + 0] == 2015.0);
  CHECK(wb.inputs[(1 * 3 + 2) * 32 + 31] == 2046.0);
  CHECK(wb.targets[(1 * 3 + 2) * 8 + 0] == 2047.0);
  REQUIRE(wb.dyn);
  CHECK(wb.dyn->shape == ad::Shape{2, 1, 32, 4});
  // row 15 of a series starting 2016-07-01 00:00 hourly is 15:00
  CHECK(wb.dyn->data[(1 * 32 + 0) * 4 + 0] == 15);
  CHECK_THROWS_AS(WindowIterator<double>(ds, {0, 39}, o), ConfigError);
}

TEST_CASE("shuffled order is a seeded permutation") {
  auto ds = ramp_dataset(300, 1);
  WindowOptions o;
  o.lookback = 16;
  o.horizon = 4;
  o.shuffle = true;
  o.seed = 9;
  WindowIterator<float> a(ds, {0, 300}, o), b(ds, {0, 300}, o);
  CHECK(a.order() == b.order());
  std::set<std::size_t> ids(a.order().begin(), a.order().end());
  CHECK(ids.size() == a.window_count());
  CHECK(*ids.rbegin() == a.window_count() - 1);
  auto first = a.order();
  a.start_epoch();
  CHECK(a.order() != first);
  o.seed = 10;
  WindowIterator<float> c(ds, {0, 300}, o);
  CHECK(c.order() != b.order());
}

TEST_CASE("calendar covariates") {
  std::vector<std::int64_t> ts = {parse_timestamp("2016-07-01T00:00")};
  auto cal = calendar_covariates(ts, 0, 1);
  REQUIRE(cal);
  CHECK(cal->data == std::vector<std::int32_t>{0, 4, 0, 6});

  SUBCASE("agrees with an independent weekday oracle") {
    std::vector<std::int64_t> days;
    const std::int64_t start = parse_timestamp("1999-12-25 07:00:00");
    for (int i = 0; i < 3000; i += 7) days.push_back(start + static_cast<std::int64_t>(i) * 86400 + 3600 * (i % 24));
    auto c = calendar_covariates(days, 0, days.size());
    for (std::size_t i = 0; i < days.size(); ++i) {
      const std::string f = format_timestamp(days[i]);
      const int y = std::stoi(f.substr(0, 4)), m = std::stoi(f.substr(5, 2)), d = std::stoi(f.substr(8, 2));
      const int h = std::stoi(f.substr(11, 2));
      CHECK(c->data[i * 4 + 0] == h);
      CHECK(c->data[i * 4 + 1] == weekday_oracle(y, m, d));
      CHECK(c->data[i * 4 + 2] == d - 1);
      CHECK(c->data[i * 4 + 3] == m - 1);
    }
  }

  SUBCASE("10-minute data buckets by hour") {
    std::vector<std::int64_t> t10;
    for (int i = 0; i < 12; ++i) t10.push_back(parse_timestamp("2020-01-01 05:00") + 600 * i);
    auto c = calendar_covariates(t10, 0, 12);
    for (int i = 0; i < 6; ++i) CHECK(c->data[i * 4] == 5);
    for (int i = 6; i < 12; ++i) CHECK(c->data[i * 4] == 6);
  }
}

TEST_CASE("synthetic retail generator") {
  CHECK_THROWS_AS(synth_retail_generate(729, 1), ConfigError);
  const auto ds = synth_retail_generate(1095, 42);
  REQUIRE(ds.channels() == 8);
  REQUIRE(ds.rows() == 1095);
  const std::size_t n = ds.rows();
  const SynthRetailOptions opts;

  for (std::size_t t = 0; t < n; ++t) CHECK(ds.at(t, 1) == ds.at(t, 0));

  double m = 0;
  for (std::size_t t = 0; t < n; ++t) m += ds.at(t, 4);
  m /= static_cast<double>(n);
  double num = 0, den = 0;
  for (std::size_t t = 0; t < n; ++t) {
    den += (ds.at(t, 4) - m) * (ds.at(t, 4) - m);
    if (t + 1 < n) num += (ds.at(t, 4) - m) * (ds.at(t + 1, 4) - m);
  }
  CHECK(std::abs(num / den) < 0.1);
  CHECK(std::sqrt(den / static_cast<double>(n)) == doctest::Approx(1.0).epsilon(0.1));

  std::vector<std::size_t> onsets;
  for (std::size_t t = 0; t < n; ++t) {
    const double v = ds.at(t, 5);
    CHECK((v == 0.0 || v == opts.pulse_amplitude));
    if (v > 0 && (t == 0 || ds.at(t - 1, 5) == 0.0)) onsets.push_back(t);
  }
  REQUIRE(onsets.size() >= 20);
  for (std::size_t i = 1; i < onsets.size(); ++i) {
    const std::size_t gap = onsets[i] - onsets[i - 1];
    CHECK(gap >= 30);
    CHECK(gap <= 45);
  }

  SUBCASE("C7 response onset cross-correlates with C6 onset at the lag") {
    std::vector<double> pulse_on(n, 0.0), resp_on(n, 0.0);
    for (auto o : onsets) pulse_on[o] = 1.0;
    std::vector<double> excess(n);
    for (std::size_t t = 0; t < n; ++t)
      excess[t] = ds.at(t, 6) - opts.c7_baseline - opts.c7_weekly_amplitude * ds.at(t, 0);
    for (std::size_t t = 0; t < n; ++t)
      if (excess[t] > 1e-9 && (t == 0 || excess[t - 1] <= 1e-9)) resp_on[t] = 1.0;
    auto corr_at = [&](std::size_t lag) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      const double cnt = static_cast<double>(n - lag);
      for (std::size_t t = 0; t + lag < n; ++t) {
        const double x = pulse_on[t], y = resp_on[t + lag];
        sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
      }
      return (sxy - sx * sy / cnt) /
             std::sqrt((sxx - sx * sx / cnt) * (syy - sy * sy / cnt));
    };
    std::size_t best = 0;
    double best_corr = -2;
    for (std::size_t lag = 0; lag < 20; ++lag)
      if (corr_at(lag) > best_corr) best_corr = corr_at(lag), best = lag;
    CHECK(best == opts.response_lag);
    CHECK(best_corr == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("C8 suppressed exactly while C6 is on") {
    for (std::size_t t = 0; t < n; ++t) {
      const double base = opts.c8_baseline + ds.at(t, 0);
      const double want = ds.at(t, 5) > 0 ? base * opts.suppression : base;
      CHECK(ds.at(t, 7) == doctest::Approx(want));
    }
  }

  SUBCASE("C3 and C4 shapes") {
    for (std::size_t t = 0; t < 50; ++t) {
      CHECK(ds.at(t, 2) == doctest::Approx(t % 2 == 0 ? 1.0 : -1.0));
      CHECK(ds.at(t, 3) - ds.at(t, 0) == doctest::Approx(0.01 * static_cast<double>(t)));
    }
  }

  SUBCASE("deterministic under seed") {
    CHECK(format_csv_dataset(synth_retail_generate(1095, 42)) == format_csv_dataset(ds));
    CHECK(format_csv_dataset(synth_retail_generate(1095, 43)) != format_csv_dataset(ds));
  }

  CHECK(synth_response_kernel(3, 3) == 1.0);
  CHECK(synth_response_kernel(0, 3) == doctest::Approx(0.25));
  CHECK(synth_response_kernel(7, 3) == 0.0);
}

TEST_CASE("patch masking") {
  ad::Tensor<double> x({3, 4, 256}, 1.0);
  auto [masked, flags] = mask_patches(x, 16, 0.45, 7ULL);
  CHECK(flags.shape == ad::Shape{3, 4, 16});
  for (std::size_t row = 0; row < 12; ++row) {
    int count = 0;
    for (std::size_t p = 0; p < 16; ++p) {
      const bool on = flags.data[row * 16 + p] == 1;
      count += on;
      for (std::size_t k = 0; k < 16; ++k)
        CHECK(masked[row * 256 + p * 16 + k] == (on ? 0.0 : 1.0));
    }
    CHECK(count == 7);
  }
  CHECK(x[0] == 1.0);

  auto [same, none] = mask_patches(x, 16, 0.01, 7ULL);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);
  for (auto f : none.data) CHECK(f == 0);

  auto [a, fa] = mask_patches(x, 16, 0.45, 3ULL);
  auto [b, fb] = mask_patches(x, 16, 0.45, 3ULL);
  CHECK(fa.data == fb.data);

  CHECK_THROWS_AS(mask_patches(x, 16, 0.0, 1ULL), ConfigError);
  CHECK_THROWS_AS(mask_patches(x, 16, 1.0, 1ULL), ConfigError);
  CHECK_THROWS_AS(mask_patches(x, 16, -0.2, 1ULL), ConfigError);
  CHECK_THROWS_AS(mask_patches(x, 24, 0.45, 1ULL), ConfigError);
}
