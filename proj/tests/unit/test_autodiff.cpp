#include <cmath>
#include <random>

#include "doctest.h"
#include "factr/autodiff/ops.hpp"

using namespace factr::ad;
using T64 = Tensor<double>;

namespace {

T64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  T64 t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Weighted sum against fixed random coefficients turns any tensor into a
// scalar whose gradient exercises every output component.
T64 project(const T64& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

}  // namespace

TEST_CASE("matmul hand cases") {
  auto a = T64::from({2, 2}, {1, 2, 3, 4});
  auto b = T64::from({2, 2}, {5, 6, 7, 8});
  auto c = matmul(a, b);
  CHECK(c[0] == 19);
  CHECK(c[1] == 22);
  CHECK(c[2] == 43);
  CHECK(c[3] == 50);

  auto eye = T64::from({2, 2}, {1, 0, 0, 1});
  auto same = matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == a[i]);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  T64 a({3, 4}), b({3, 2});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[3,4]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match central differences") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  CHECK(grad_check<double>([&](const T64& x) { return project(matmul(x, b)); }, a) < 1e-4);
  CHECK(grad_check<double>([&](const T64& x) { return project(matmul(a, x)); }, b) < 1e-4);

  // Batched with broadcasting on the left operand's batch axis.
  auto q = random_tensor({2, 3, 4, 5}, rng);
  auto k = random_tensor({1, 3, 5, 4}, rng);
  CHECK(grad_check<double>([&](const T64& x) { return project(matmul(q, x)); }, k) < 1e-4);
  CHECK(grad_check<double>([&](const T64& x) { return project(matmul(x, k)); }, q) < 1e-4);
}

TEST_CASE("matmul is associative on 4x4 chains") {
  std::mt19937_64 rng(7);
  auto a = random_tensor({4, 4}, rng), b = random_tensor({4, 4}, rng), c = random_tensor({4, 4}, rng);
  auto left = matmul(matmul(a, b), c);
  auto right = matmul(a, matmul(b, c));
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(left[i] - right[i]) < 1e-10);
}

TEST_CASE("softmax values and stability") {
  auto s = softmax(T64::from({2}, {0, 0}), -1);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));

  auto big = softmax(T64::from({2}, {1000, 0}), -1);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));

  auto three = softmax(T64::from({3}, {1, 2, 3}), 0);
  CHECK(std::abs(three[0] - 0.0900) < 1e-4);
  CHECK(std::abs(three[1] - 0.2447) < 1e-4);
  CHECK(std::abs(three[2] - 0.6652) < 1e-4);
}

TEST_CASE("softmax slices sum to one on random shapes and axes") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({3, 4, 5}, rng, -20, 20);
    for (int axis = 0; axis < 3; ++axis) {
      auto y = softmax(x, axis);
      const auto& s = y.shape();
      std::size_t outer = 1, inner = 1;
      for (int i = 0; i < axis; ++i) outer *= s[i];
      for (std::size_t i = axis + 1; i < 3; ++i) inner *= s[i];
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          double total = 0;
          for (std::size_t l = 0; l < s[axis]; ++l) {
            const double v = y[(o * s[axis] + l) * inner + in];
            CHECK(v > 0);
            total += v;
          }
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
    }
    CHECK(grad_check<double>([](const T64& v) { return project(softmax(v, 1)); }, x) < 1e-4);
  }
}

TEST_CASE("layer_norm cases") {
  auto g = T64::full({3}, 1.0), b = T64::zeros({3});
  auto flat = layer_norm(T64::from({3}, {1, 1, 1}), g, b, 1e-5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(flat[i] == doctest::Approx(0.0));

  auto g2 = T64::full({2}, 1.0), b2 = T64::zeros({2});
  auto two = layer_norm(T64::from({2}, {0, 2}), g2, b2, 1e-12);
  CHECK(two[0] == doctest::Approx(-1.0));
  CHECK(two[1] == doctest::Approx(1.0));

  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 8}, rng);
  auto gamma = random_tensor({8}, rng, 0.5, 1.5), beta = random_tensor({8}, rng);
  CHECK(grad_check<double>([&](const T64& v) { return project(layer_norm(v, gamma, beta, 1e-5)); }, x) < 1e-4);
  CHECK(grad_check<double>([&](const T64& v) { return project(layer_norm(x, v, beta, 1e-5)); }, gamma) < 1e-4);
  CHECK(grad_check<double>([&](const T64& v) { return project(layer_norm(x, gamma, v, 1e-5)); }, beta) < 1e-4);
}

TEST_CASE("gelu and sigmoid values") {
  auto g = gelu(T64::from({3}, {0, 10, 1}));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(10.0));
  CHECK(std::abs(g[2] - 0.84134) < 1e-3);

  auto s = sigmoid(T64::from({2}, {0, 2}));
  CHECK(s[0] == 0.5);
  CHECK(std::abs(s[1] - 0.8808) < 1e-4);

  std::mt19937_64 rng(11);
  auto x = random_tensor({50}, rng, -30, 30);
  auto pos = sigmoid(x);
  auto neg = sigmoid(scale(x, -1.0));
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(std::abs(pos[i] + neg[i] - 1.0) < 1e-12);
  }
  auto mid = random_tensor({20}, rng, -4, 4);
  auto smid = sigmoid(mid);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(smid[i] > 0.0);
    CHECK(smid[i] < 1.0);
  }
  CHECK(grad_check<double>([](const T64& v) { return project(gelu(v)); }, mid) < 1e-4);
  CHECK(grad_check<double>([](const T64& v) { return project(sigmoid(v)); }, mid) < 1e-4);
}

TEST_CASE("backward basics") {
  auto x = T64::from({1}, {3.0});
  x.set_requires_grad();
  auto y = mul(x, x);
  backward(y);
  CHECK(x.grad()[0] == 6.0);

  auto v = T64::full({2, 3}, 1.5);
  v.set_requires_grad();
  backward(sum(v));
  for (double gval : v.grad()) CHECK(gval == 1.0);

  // y = x + x accumulates two contributions exactly.
  auto w = T64::from({1}, {0.3});
  w.set_requires_grad();
  backward(sum(add(w, w)));
  CHECK(w.grad()[0] == 2.0);
}

TEST_CASE("backward contract errors") {
  auto x = T64::full({2}, 1.0);
  x.set_requires_grad();
  auto y = scale(x, 2.0);
  CHECK_THROWS_AS(backward(y), ContractError);
  CHECK(Tape<double>::active().size() == 0);

  // Detached graph: nothing requires grad, backward is a no-op.
  auto c = T64::full({2}, 1.0);
  backward(sum(c));
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("grad_check self tests") {
  std::mt19937_64 rng(13);
  auto x = random_tensor({6}, rng);
  CHECK(grad_check<double>([](const T64& v) { return sum(mul(v, v)); }, x) < 1e-8);

  // Cross-entropy of softmax against a fixed one-hot target.
  auto logits = random_tensor({2, 5}, rng, -3, 3);
  auto target = T64::from({2, 5}, {0, 1, 0, 0, 0, 0, 0, 0, 1, 0});
  auto xent = [&](const T64& v) { return scale(sum(mul(log(softmax(v, -1)), target)), -1.0); };
  CHECK(grad_check<double>(xent, logits) < 1e-5);

  auto gamma = T64::full({5}, 1.0), beta = T64::zeros({5});
  CHECK(grad_check<double>([&](const T64& v) { return project(gelu(layer_norm(v, gamma, beta, 1e-5))); }, logits) < 1e-4);
}

TEST_CASE("grad_check reports NaN component") {
  auto x = T64::from({2}, {1.0, -1.0});
  auto f = [](const T64& v) { return sum(div(v, sub(v, v))); };  // 0/0 style
  CHECK_THROWS_AS(grad_check<double>(f, x), ContractError);
}

TEST_CASE("broadcasting binary ops and reductions") {
  std::mt19937_64 rng(17);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({3, 1}, rng, 0.5, 2.0);
  auto c = random_tensor({4}, rng);
  CHECK(grad_check<double>([&](const T64& v) { return project(add(v, c)); }, a) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(mul(a, v)); }, b) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(div(a, v)); }, b) < 1e-5);
  CHECK(grad_check<double>([&](const T64& v) { return project(sub(v, a)); }, c) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(sum_axis(v, 1, true)); }, a) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(mean_axis(v, -1, false)); }, a) < 1e-6);

  auto s = add(a, c);
  CHECK(s.shape() == Shape{2, 3, 4});
  CHECK(s[5] == a[5] + c[1]);
  CHECK_THROWS_AS(add(a, T64({3})), DimensionError);
}

TEST_CASE("layout ops") {
  std::mt19937_64 rng(19);
  auto x = random_tensor({2, 3, 4}, rng);
  auto p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  CHECK(p[(1 * 2 + 1) * 3 + 2] == x[(1 * 3 + 2) * 4 + 1]);
  CHECK(grad_check<double>([](const T64& v) { return project(permute(v, {1, 2, 0})); }, x) < 1e-6);
  CHECK(grad_check<double>([](const T64& v) { return project(reshape(v, {6, 4})); }, x) < 1e-6);
  CHECK(grad_check<double>([](const T64& v) { return project(transpose_last(v)); }, x) < 1e-6);

  auto y = random_tensor({2, 3, 2}, rng);
  auto cat = concat_last(std::vector<T64>{x, y});
  CHECK(cat.shape() == Shape{2, 3, 6});
  CHECK(cat[4] == y[0]);
  CHECK(grad_check<double>([&](const T64& v) { return project(concat_last(std::vector<T64>{x, v})); }, y) < 1e-6);
}

TEST_CASE("embedding, unfold and depthwise conv") {
  std::mt19937_64 rng(23);
  auto table = random_tensor({5, 3}, rng);
  IndexTensor idx({2, 2});
  idx.data = {0, 4, 4, 2};
  auto e = embedding(table, idx);
  CHECK(e.shape() == Shape{2, 2, 3});
  CHECK(e[3] == table[12]);
  CHECK(grad_check<double>([&](const T64& v) { return project(embedding(v, idx)); }, table) < 1e-6);
  idx.data[1] = 5;
  CHECK_THROWS_AS(embedding(table, idx), std::out_of_range);

  auto seq = random_tensor({2, 12}, rng);
  auto u = unfold(seq, 4, 4);
  CHECK(u.shape() == Shape{2, 3, 4});
  CHECK(u[(1 * 3 + 2) * 4 + 1] == seq[12 + 9]);
  auto overlap = unfold(seq, 4, 2);
  CHECK(overlap.shape() == Shape{2, 5, 4});
  CHECK(grad_check<double>([](const T64& v) { return project(unfold(v, 4, 2)); }, seq) < 1e-6);

  auto x = random_tensor({2, 8, 3}, rng);
  auto w = random_tensor({3, 4}, rng), b = random_tensor({3}, rng);
  auto conv = depthwise_conv1d(x, w, b, 4);
  CHECK(conv.shape() == Shape{2, 2, 3});
  double manual = b[1];
  for (int p = 0; p < 4; ++p) manual += w[1 * 4 + p] * x[(8 + 4 + p) * 3 + 1];
  CHECK(conv[(1 * 2 + 1) * 3 + 1] == doctest::Approx(manual));
  CHECK(grad_check<double>([&](const T64& v) { return project(depthwise_conv1d(v, w, b, 4)); }, x) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(depthwise_conv1d(x, v, b, 2)); }, w) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(depthwise_conv1d(x, w, v, 4)); }, b) < 1e-6);
}

TEST_CASE("gram is exactly symmetric and differentiable") {
  std::mt19937_64 rng(29);
  auto v = random_tensor({2, 5, 3}, rng);
  auto s = gram(v);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(s[t * 25 + i * 5 + j] == s[t * 25 + j * 5 + i]);
  CHECK(grad_check<double>([](const T64& x) { return project(gram(x)); }, v) < 1e-6);
}

TEST_CASE("linear with bias gradients") {
  std::mt19937_64 rng(31);
  auto x = random_tensor({2, 3, 4}, rng);
  auto w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng);
  CHECK(grad_check<double>([&](const T64& v) { return project(linear(v, w, b)); }, x) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(linear(x, v, b)); }, w) < 1e-6);
  CHECK(grad_check<double>([&](const T64& v) { return project(linear(x, w, v)); }, b) < 1e-6);
}

TEST_CASE("dropout is inverted and identity at eval") {
  std::mt19937_64 rng(37);
  auto x = T64::full({10000}, 1.0);
  auto eval = dropout(x, 0.1, rng, false);
  CHECK(eval.same_storage(x));
  auto y = dropout(x, 0.1, rng, true);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.9));
  }
  CHECK(zeros > 800);
  CHECK(zeros < 1200);
}

TEST_CASE("forward values are deterministic") {
  auto run = [] {
    std::mt19937_64 rng(41);
    auto a = random_tensor({8, 16}, rng), w = random_tensor({16, 4}, rng);
    return softmax(gelu(matmul(a, w)), -1);
  };
  auto r1 = run(), r2 = run();
  for (std::size_t i = 0; i < r1.numel(); ++i) CHECK(r1[i] == r2[i]);
}
