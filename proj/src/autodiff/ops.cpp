#include "factr/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace factr::ad {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <typename Real>
using MapConstMat = Eigen::Map<const RowMat<Real>>;

template <typename Real>
using ImplPtr = std::shared_ptr<TensorImpl<Real>>;

template <typename Real>
bool should_record(std::initializer_list<const Tensor<Real>*> inputs) {
  if (!Tape<Real>::active().recording()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename Real, typename Backward>
void record(const char* op, std::vector<ImplPtr<Real>> inputs, Tensor<Real>& out,
            Backward&& bw) {
  out.set_requires_grad(true);
  TapeNode<Real> node;
  node.op = op;
  node.inputs = std::move(inputs);
  node.output = out.handle();
  node.backward = std::forward<Backward>(bw);
  Tape<Real>::active().push(std::move(node));
}

std::size_t norm_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  return static_cast<std::size_t>(axis);
}

// ---------------------------------------------------------------------------
// Broadcasting iteration

struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> extent;  // coalesced
  std::vector<std::size_t> sa, sb;  // operand strides in coalesced index space
};

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[off + i] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

BroadcastPlan make_plan(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t eb = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    out[i] = std::max(ea, eb);
  }
  auto sa = broadcast_strides(a, out);
  auto sb = broadcast_strides(b, out);

  BroadcastPlan plan;
  plan.out_shape = out;
  // Coalesce from the innermost axis outward.
  for (std::size_t i = rank; i-- > 0;) {
    if (out[i] == 1) continue;
    if (!plan.extent.empty()) {
      const std::size_t k = plan.extent.size() - 1;
      // Contiguous continuation for both operands (0 == 0 * e covers broadcast axes).
      if (plan.sa[k] * plan.extent[k] == sa[i] && plan.sb[k] * plan.extent[k] == sb[i]) {
        plan.extent[k] *= out[i];
        continue;
      }
    }
    plan.extent.push_back(out[i]);
    plan.sa.push_back(sa[i]);
    plan.sb.push_back(sb[i]);
  }
  if (plan.extent.empty()) {
    plan.extent.push_back(1);
    plan.sa.push_back(0);
    plan.sb.push_back(0);
  }
  std::reverse(plan.extent.begin(), plan.extent.end());
  std::reverse(plan.sa.begin(), plan.sa.end());
  std::reverse(plan.sb.begin(), plan.sb.end());
  return plan;
}

// Calls f(io, ia, ib) for every output element in row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.extent.size();
  const std::size_t inner = p.extent[rank - 1];
  const std::size_t sai = p.sa[rank - 1], sbi = p.sb[rank - 1];
  std::size_t total = 1;
  for (auto e : p.extent) total *= e;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t io = 0; io < total; io += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(io + j, ia + j * sai, ib + j * sbi);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.extent[d]) break;
      ia -= p.sa[d] * p.extent[d];
      ib -= p.sb[d] * p.extent[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename Real>
Tensor<Real> binary(const Tensor<Real>& a, const Tensor<Real>& b, BinOp op, const char* name) {
  auto plan = make_plan(a.shape(), b.shape(), name);
  Tensor<Real> out(plan.out_shape);
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out.data().data();
  switch (op) {
    case BinOp::Add:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] + pb[j]; });
      break;
    case BinOp::Sub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] - pb[j]; });
      break;
    case BinOp::Mul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] * pb[j]; });
      break;
    case BinOp::Div:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] / pb[j]; });
      break;
  }
  if (!should_record({&a, &b})) return out;

  auto ia = a.handle(), ib = b.handle(), io = out.handle();
  record<Real>(name, {ia, ib}, out, [ia, ib, io, plan, op]() {
    const Real* g = io->grad.data();
    const bool need_a = ia->requires_grad, need_b = ib->requires_grad;
    Real* ga = need_a ? ia->grad_buffer() : nullptr;
    Real* gb = need_b ? ib->grad_buffer() : nullptr;
    const Real* va = ia->data.data();
    const Real* vb = ib->data.data();
    switch (op) {
      case BinOp::Add:
        for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
        });
        break;
      case BinOp::Sub:
        for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
        });
        break;
      case BinOp::Mul:
        for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
          if (ga) ga[i] += g[o] * vb[j];
          if (gb) gb[j] += g[o] * va[i];
        });
        break;
      case BinOp::Div:
        for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
          if (ga) ga[i] += g[o] / vb[j];
          if (gb) gb[j] -= g[o] * va[i] / (vb[j] * vb[j]);
        });
        break;
    }
  });
  return out;
}

template <typename Real, typename Fwd, typename Deriv>
Tensor<Real> unary(const Tensor<Real>& x, const char* name, Fwd fwd, Deriv deriv) {
  Tensor<Real> out(x.shape());
  const Real* px = x.data().data();
  Real* po = out.data().data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>(name, {ix}, out, [ix, io, deriv]() {
    const Real* g = io->grad.data();
    Real* gx = ix->grad_buffer();
    const Real* vx = ix->data.data();
    const Real* vy = io->data.data();
    for (std::size_t i = 0; i < ix->data.size(); ++i) gx[i] += g[i] * deriv(vx[i], vy[i]);
  });
  return out;
}

Shape batch_of(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

}  // namespace

// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinOp::Add, "add");
}
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinOp::Sub, "sub");
}
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinOp::Mul, "mul");
}
template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinOp::Div, "div");
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real s) {
  return unary(x, "scale", [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real s) {
  return unary(x, "add_scalar", [s](Real v) { return v + s; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      x, "gelu",
      [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * Real(inv_sqrt2))); },
      [](Real v, Real) {
        const Real cdf = Real(0.5) * (Real(1) + std::erf(v * Real(inv_sqrt2)));
        const Real pdf = Real(inv_sqrt2pi) * std::exp(Real(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return unary(
      x, "sigmoid",
      [](Real v) {
        if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> abs(const Tensor<Real>& x) {
  return unary(
      x, "abs", [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& x) {
  return unary(
      x, "log", [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  if (weight.dim() != 2)
    throw DimensionError("linear: weight must be 2-D, got " + shape_str(weight.shape()));
  const std::size_t in = weight.shape()[0], outd = weight.shape()[1];
  if (x.dim() < 1 || x.shape().back() != in)
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  const bool has_bias = bias.numel() > 0 && !bias.shape().empty();
  if (has_bias && (bias.numel() != outd))
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match out dim " +
                         std::to_string(outd));
  const std::size_t rows = x.numel() / in;
  Shape oshape = x.shape();
  oshape.back() = outd;
  Tensor<Real> out(oshape);
  MapConstMat<Real> X(x.data().data(), rows, in);
  MapConstMat<Real> W(weight.data().data(), in, outd);
  MapMat<Real> Y(out.data().data(), rows, outd);
  Y.noalias() = X * W;
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> b(bias.data().data(), outd);
    Y.rowwise() += b;
  }
  if (!should_record({&x, &weight, &bias})) return out;
  auto ix = x.handle(), iw = weight.handle(), ib = bias.handle(), io = out.handle();
  record<Real>("linear", {ix, iw, ib}, out, [ix, iw, ib, io, rows, in, outd, has_bias]() {
    MapConstMat<Real> G(io->grad.data(), rows, outd);
    if (ix->requires_grad) {
      MapMat<Real> GX(ix->grad_buffer(), rows, in);
      MapConstMat<Real> W(iw->data.data(), in, outd);
      GX.noalias() += G * W.transpose();
    }
    if (iw->requires_grad) {
      MapMat<Real> GW(iw->grad_buffer(), in, outd);
      MapConstMat<Real> X(ix->data.data(), rows, in);
      GW.noalias() += X.transpose() * G;
    }
    if (has_bias && ib->requires_grad) {
      Real* gb = ib->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* g = io->grad.data() + r * outd;
        for (std::size_t c = 0; c < outd; ++c) gb[c] += g[c];
      }
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.dim() < 2 || b.dim() < 2)
    throw DimensionError("matmul: operands must be at least 2-D, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::size_t m = a.shape()[a.dim() - 2], k = a.shape().back();
  const std::size_t kb = b.shape()[b.dim() - 2], n = b.shape().back();
  if (k != kb)
    throw DimensionError("matmul: inner extents differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  if (b.dim() == 2) return linear(a, b, Tensor<Real>());

  // Broadcast batch extents; each batch is one small GEMM.
  const Shape ba = batch_of(a.shape()), bb = batch_of(b.shape());
  BroadcastPlan plan;
  try {
    plan = make_plan(ba.empty() ? Shape{1} : ba, bb.empty() ? Shape{1} : bb, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch extents of " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " do not broadcast");
  }
  Shape oshape = plan.out_shape;
  oshape.push_back(m);
  oshape.push_back(n);
  Tensor<Real> out(oshape);
  std::vector<std::size_t> offs_a, offs_b;
  for_each_broadcast(plan, [&](std::size_t, std::size_t i, std::size_t j) {
    offs_a.push_back(i);
    offs_b.push_back(j);
  });
  for (std::size_t t = 0; t < offs_a.size(); ++t) {
    MapConstMat<Real> A(a.data().data() + offs_a[t] * m * k, m, k);
    MapConstMat<Real> B(b.data().data() + offs_b[t] * k * n, k, n);
    MapMat<Real> C(out.data().data() + t * m * n, m, n);
    C.noalias() = A * B;
  }
  if (!should_record({&a, &b})) return out;
  auto ia = a.handle(), ib = b.handle(), io = out.handle();
  record<Real>("matmul", {ia, ib}, out, [ia, ib, io, offs_a, offs_b, m, k, n]() {
    for (std::size_t t = 0; t < offs_a.size(); ++t) {
      MapConstMat<Real> G(io->grad.data() + t * m * n, m, n);
      if (ia->requires_grad) {
        MapMat<Real> GA(ia->grad_buffer() + offs_a[t] * m * k, m, k);
        MapConstMat<Real> B(ib->data.data() + offs_b[t] * k * n, k, n);
        GA.noalias() += G * B.transpose();
      }
      if (ib->requires_grad) {
        MapMat<Real> GB(ib->grad_buffer() + offs_b[t] * k * n, k, n);
        MapConstMat<Real> A(ia->data.data() + offs_a[t] * m * k, m, k);
        GB.noalias() += A.transpose() * G;
      }
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> gram(const Tensor<Real>& v) {
  if (v.dim() < 2) throw DimensionError("gram: need at least 2-D input, got " + shape_str(v.shape()));
  const std::size_t n = v.shape()[v.dim() - 2], r = v.shape().back();
  const std::size_t batches = v.numel() / (n * r);
  Shape oshape = batch_of(v.shape());
  oshape.push_back(n);
  oshape.push_back(n);
  Tensor<Real> out(oshape);
  const Real* pv = v.data().data();
  Real* po = out.data().data();
  for (std::size_t t = 0; t < batches; ++t) {
    const Real* V = pv + t * n * r;
    Real* S = po + t * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        Real acc = 0;
        for (std::size_t q = 0; q < r; ++q) acc += V[i * r + q] * V[j * r + q];
        S[i * n + j] = acc;
        S[j * n + i] = acc;
      }
    }
  }
  if (!should_record({&v})) return out;
  auto iv = v.handle(), io = out.handle();
  record<Real>("gram", {iv}, out, [iv, io, n, r, batches]() {
    RowMat<Real> sym(n, n);
    for (std::size_t t = 0; t < batches; ++t) {
      MapConstMat<Real> G(io->grad.data() + t * n * n, n, n);
      MapConstMat<Real> V(iv->data.data() + t * n * r, n, r);
      MapMat<Real> GV(iv->grad_buffer() + t * n * r, n, r);
      sym = G + G.transpose();
      GV.noalias() += sym * V;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Normalisation

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::ptrdiff_t axis_in) {
  const std::size_t axis = norm_axis(axis_in, x.dim());
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tensor<Real> out(s);
  const Real* px = x.data().data();
  Real* py = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
      Real total = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const Real e = std::exp(px[base + l * inner] - mx);
        py[base + l * inner] = e;
        total += e;
      }
      const Real inv = Real(1) / total;
      for (std::size_t l = 0; l < len; ++l) py[base + l * inner] *= inv;
    }
  }
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("softmax", {ix}, out, [ix, io, outer, inner, len]() {
    const Real* g = io->grad.data();
    const Real* y = io->data.data();
    Real* gx = ix->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Real dot = 0;
        for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t p = base + l * inner;
          gx[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps) {
  if (eps <= 0) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(d) + " entries, got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  const std::size_t rows = x.numel() / d;
  Tensor<Real> out(x.shape());
  std::vector<Real> xhat(x.numel()), rstd(rows);
  const Real* px = x.data().data();
  const Real* pg = gamma.data().data();
  const Real* pb = beta.data().data();
  Real* py = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = px + r * d;
    Real mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= Real(d);
    Real var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= Real(d);
    const Real inv = Real(1) / std::sqrt(var + eps);
    rstd[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const Real h = (row[i] - mu) * inv;
      xhat[r * d + i] = h;
      py[r * d + i] = h * pg[i] + pb[i];
    }
  }
  if (!should_record({&x, &gamma, &beta})) return out;
  auto ix = x.handle(), ig = gamma.handle(), ib = beta.handle(), io = out.handle();
  record<Real>("layer_norm", {ix, ig, ib}, out,
               [ix, ig, ib, io, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)]() {
                 const Real* g = io->grad.data();
                 const Real* pg = ig->data.data();
                 Real* gx = ix->requires_grad ? ix->grad_buffer() : nullptr;
                 Real* gg = ig->requires_grad ? ig->grad_buffer() : nullptr;
                 Real* gb = ib->requires_grad ? ib->grad_buffer() : nullptr;
                 for (std::size_t r = 0; r < rows; ++r) {
                   const Real* gr = g + r * d;
                   const Real* hr = xhat.data() + r * d;
                   if (gg || gb) {
                     for (std::size_t i = 0; i < d; ++i) {
                       if (gg) gg[i] += gr[i] * hr[i];
                       if (gb) gb[i] += gr[i];
                     }
                   }
                   if (gx) {
                     Real m1 = 0, m2 = 0;
                     for (std::size_t i = 0; i < d; ++i) {
                       const Real dh = gr[i] * pg[i];
                       m1 += dh;
                       m2 += dh * hr[i];
                     }
                     m1 /= Real(d);
                     m2 /= Real(d);
                     for (std::size_t i = 0; i < d; ++i) {
                       const Real dh = gr[i] * pg[i];
                       gx[r * d + i] += rstd[r] * (dh - m1 - hr[i] * m2);
                     }
                   }
                 }
               });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  Tensor<Real> out = Tensor<Real>::scalar(acc);
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("sum", {ix}, out, [ix, io]() {
    const Real g = io->grad[0];
    Real* gx = ix->grad_buffer();
    for (std::size_t i = 0; i < ix->data.size(); ++i) gx[i] += g;
  });
  return out;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / Real(x.numel()));
}

template <typename Real>
Tensor<Real> sum_axis(const Tensor<Real>& x, std::ptrdiff_t axis_in, bool keepdim) {
  const std::size_t axis = norm_axis(axis_in, x.dim());
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape oshape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == axis) {
      if (keepdim) oshape.push_back(1);
    } else {
      oshape.push_back(s[i]);
    }
  }
  if (oshape.empty()) oshape.push_back(1);
  Tensor<Real> out(oshape);
  const Real* px = x.data().data();
  Real* po = out.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t in = 0; in < inner; ++in) po[o * inner + in] += px[(o * len + l) * inner + in];
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("sum_axis", {ix}, out, [ix, io, outer, inner, len]() {
    const Real* g = io->grad.data();
    Real* gx = ix->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t in = 0; in < inner; ++in) gx[(o * len + l) * inner + in] += g[o * inner + in];
  });
  return out;
}

template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, std::ptrdiff_t axis, bool keepdim) {
  const std::size_t len = x.size(axis);
  return scale(sum_axis(x, axis, keepdim), Real(1) / Real(len));
}

// ---------------------------------------------------------------------------
// Layout

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<Real> out(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("reshape", {ix}, out, [ix, io]() { ix->accumulate_grad(io->grad); });
  return out;
}

// Visits output elements in order with the matching strided input offset.
template <typename F>
void strided_walk(const Shape& oshape, const std::vector<std::size_t>& strides, F&& f) {
  const std::size_t rank = oshape.size();
  const std::size_t n = numel(oshape);
  if (n == 0) return;
  const std::size_t last = oshape[rank - 1], step = strides[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < n; o += last) {
    for (std::size_t j = 0; j < last; ++j) f(o + j, off + j * step);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < oshape[d]) break;
      off -= strides[d] * oshape[d];
      idx[d] = 0;
    }
  }
}

template <typename Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.dim();
  if (axes.size() != rank)
    throw DimensionError("permute: expected " + std::to_string(rank) + " axes for " +
                         shape_str(x.shape()));
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: invalid axis order");
    seen[a] = true;
  }
  const auto& s = x.shape();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * s[i + 1];
  Shape oshape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    oshape[i] = s[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  Tensor<Real> out(oshape);
  const Real* px = x.data().data();
  Real* po = out.data().data();
  strided_walk(oshape, src_strides, [&](std::size_t o, std::size_t i) { po[o] = px[i]; });
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("permute", {ix}, out, [ix, io, oshape, src_strides]() {
    const Real* g = io->grad.data();
    Real* gx = ix->grad_buffer();
    strided_walk(oshape, src_strides, [&](std::size_t o, std::size_t i) { gx[i] += g[o]; });
  });
  return out;
}

template <typename Real>
Tensor<Real> transpose_last(const Tensor<Real>& x) {
  if (x.dim() < 2) throw DimensionError("transpose_last: need at least 2-D input");
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.dim() - 1], axes[x.dim() - 2]);
  return permute(x, axes);
}

template <typename Real>
Tensor<Real> concat_last(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead)
      throw DimensionError("concat_last: leading extents differ, " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = numel(lead);
  Shape oshape = lead;
  oshape.push_back(total);
  Tensor<Real> out(oshape);
  Real* po = out.data().data();
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Real* pp = parts[k].data().data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pp + r * widths[k], widths[k], po + r * total + off);
    off += widths[k];
  }
  bool any = false;
  if (Tape<Real>::active().recording())
    for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return out;
  std::vector<ImplPtr<Real>> ins;
  for (const auto& p : parts) ins.push_back(p.handle());
  auto io = out.handle();
  record<Real>("concat_last", ins, out, [ins, io, widths, rows, total]() {
    const Real* g = io->grad.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (ins[k]->requires_grad) {
        Real* gp = ins[k]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sequence ops

template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, const IndexTensor& indices) {
  if (table.dim() != 2) throw DimensionError("embedding: table must be 2-D");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  for (std::size_t i = 0; i < indices.data.size(); ++i) {
    const auto v = indices.data[i];
    if (v < 0 || static_cast<std::size_t>(v) >= vocab)
      throw std::out_of_range("embedding: index " + std::to_string(v) + " at position " +
                              std::to_string(i) + " outside table of " + std::to_string(vocab) +
                              " rows");
  }
  Shape oshape = indices.shape;
  oshape.push_back(d);
  Tensor<Real> out(oshape);
  const Real* pt = table.data().data();
  Real* po = out.data().data();
  for (std::size_t i = 0; i < indices.data.size(); ++i)
    std::copy_n(pt + static_cast<std::size_t>(indices.data[i]) * d, d, po + i * d);
  if (!should_record({&table})) return out;
  auto it = table.handle(), io = out.handle();
  record<Real>("embedding", {it}, out, [it, io, idx = indices.data, d]() {
    const Real* g = io->grad.data();
    Real* gt = it->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Real* row = gt + static_cast<std::size_t>(idx[i]) * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += g[i * d + c];
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> unfold(const Tensor<Real>& x, std::size_t patch, std::size_t stride) {
  const std::size_t len = x.shape().back();
  if (patch == 0 || stride == 0 || patch > len)
    throw DimensionError("unfold: patch " + std::to_string(patch) + " / stride " +
                         std::to_string(stride) + " invalid for length " + std::to_string(len));
  const std::size_t n = (len - patch) / stride + 1;
  const std::size_t rows = x.numel() / len;
  Shape oshape(x.shape().begin(), x.shape().end() - 1);
  oshape.push_back(n);
  oshape.push_back(patch);
  Tensor<Real> out(oshape);
  const Real* px = x.data().data();
  Real* po = out.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j)
      std::copy_n(px + r * len + j * stride, patch, po + (r * n + j) * patch);
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("unfold", {ix}, out, [ix, io, rows, n, patch, stride, len]() {
    const Real* g = io->grad.data();
    Real* gx = ix->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < patch; ++p)
          gx[r * len + j * stride + p] += g[(r * n + j) * patch + p];
  });
  return out;
}

template <typename Real>
Tensor<Real> slice_last(const Tensor<Real>& x, std::size_t begin, std::size_t length) {
  const std::size_t len = x.shape().back();
  if (length == 0 || begin + length > len)
    throw DimensionError("slice_last: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + length) + ") outside length " + std::to_string(len));
  const std::size_t rows = x.numel() / len;
  Shape oshape = x.shape();
  oshape.back() = length;
  Tensor<Real> out(oshape);
  const Real* px = x.data().data();
  Real* po = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(px + r * len + begin, length, po + r * length);
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("slice_last", {ix}, out, [ix, io, rows, len, begin, length]() {
    const Real* g = io->grad.data();
    Real* gx = ix->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < length; ++j) gx[r * len + begin + j] += g[r * length + j];
  });
  return out;
}

template <typename Real>
Tensor<Real> depthwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& weight,
                              const Tensor<Real>& bias, std::size_t stride) {
  if (x.dim() < 2 || weight.dim() != 2)
    throw DimensionError("depthwise_conv1d: expected x[..., L, D] and weight[D, P]");
  const std::size_t d = x.shape().back(), len = x.shape()[x.dim() - 2];
  const std::size_t patch = weight.shape()[1];
  if (weight.shape()[0] != d || bias.numel() != d)
    throw DimensionError("depthwise_conv1d: weight " + shape_str(weight.shape()) + " / bias " +
                         shape_str(bias.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  if (stride == 0 || patch > len) throw DimensionError("depthwise_conv1d: kernel longer than input");
  const std::size_t n = (len - patch) / stride + 1;
  const std::size_t batches = x.numel() / (len * d);
  Shape oshape = x.shape();
  oshape[oshape.size() - 2] = n;
  Tensor<Real> out(oshape);
  const Real* px = x.data().data();
  const Real* pw = weight.data().data();
  const Real* pb = bias.data().data();
  Real* po = out.data().data();
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      Real* orow = po + (b * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) orow[c] = pb[c];
      for (std::size_t p = 0; p < patch; ++p) {
        const Real* xrow = px + (b * len + j * stride + p) * d;
        for (std::size_t c = 0; c < d; ++c) orow[c] += pw[c * patch + p] * xrow[c];
      }
    }
  }
  if (!should_record({&x, &weight, &bias})) return out;
  auto ix = x.handle(), iw = weight.handle(), ib = bias.handle(), io = out.handle();
  record<Real>("depthwise_conv1d", {ix, iw, ib}, out, [=]() {
    const Real* g = io->grad.data();
    const Real* px = ix->data.data();
    const Real* pw = iw->data.data();
    Real* gx = ix->requires_grad ? ix->grad_buffer() : nullptr;
    Real* gw = iw->requires_grad ? iw->grad_buffer() : nullptr;
    Real* gb = ib->requires_grad ? ib->grad_buffer() : nullptr;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t j = 0; j < n; ++j) {
        const Real* grow = g + (b * n + j) * d;
        if (gb)
          for (std::size_t c = 0; c < d; ++c) gb[c] += grow[c];
        for (std::size_t p = 0; p < patch; ++p) {
          const std::size_t xo = (b * len + j * stride + p) * d;
          for (std::size_t c = 0; c < d; ++c) {
            if (gw) gw[c * patch + p] += grow[c] * px[xo + c];
            if (gx) gx[xo + c] += grow[c] * pw[c * patch + p];
          }
        }
      }
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real p, std::mt19937_64& rng, bool training) {
  if (!training || p <= Real(0)) return x;
  if (p >= Real(1)) throw ContractError("dropout: p must be below 1");
  const Real keep_scale = Real(1) / (Real(1) - p);
  std::vector<Real> mask(x.numel());
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u >= static_cast<double>(p) ? keep_scale : Real(0);
  }
  Tensor<Real> out(x.shape());
  const Real* px = x.data().data();
  Real* po = out.data().data();
  for (std::size_t i = 0; i < mask.size(); ++i) po[i] = px[i] * mask[i];
  if (!should_record({&x})) return out;
  auto ix = x.handle(), io = out.handle();
  record<Real>("dropout", {ix}, out, [ix, io, mask = std::move(mask)]() {
    const Real* g = io->grad.data();
    Real* gx = ix->grad_buffer();
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += g[i] * mask[i];
  });
  return out;
}

template <typename Real>
void check_finite(const Tensor<Real>& x, const char* where) {
  const auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!std::isfinite(d[i]))
      throw ContractError(std::string(where) + ": non-finite value at flat index " +
                          std::to_string(i));
}

template <typename Real>
Real grad_check(const std::function<Tensor<Real>(const Tensor<Real>&)>& f, const Tensor<Real>& x,
                Real h) {
  Tensor<Real> leaf = x.clone();
  leaf.set_requires_grad(true);
  Tensor<Real> y = f(leaf);
  if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
  backward(y);
  std::vector<Real> analytic(leaf.numel(), Real(0));
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  NoGradGuard<Real> guard;
  Tensor<Real> probe = x.clone();
  Real worst = 0;
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    const Real orig = probe[i];
    probe[i] = orig + h;
    const Real fp = f(probe).item();
    probe[i] = orig - h;
    const Real fm = f(probe).item();
    probe[i] = orig;
    const Real numeric = (fp - fm) / (Real(2) * h);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i]))
      throw ContractError("grad_check: NaN/Inf in gradient estimate at component " +
                          std::to_string(i));
    const Real err = std::abs(analytic[i] - numeric) / std::max(Real(1), std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

#define FACTR_INSTANTIATE_OPS(R)                                                                  \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> div(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> scale(const Tensor<R>&, R);                                                  \
  template Tensor<R> add_scalar(const Tensor<R>&, R);                                             \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                                  \
  template Tensor<R> linear(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);                \
  template Tensor<R> gram(const Tensor<R>&);                                                      \
  template Tensor<R> softmax(const Tensor<R>&, std::ptrdiff_t);                                   \
  template Tensor<R> layer_norm(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);         \
  template Tensor<R> gelu(const Tensor<R>&);                                                      \
  template Tensor<R> sigmoid(const Tensor<R>&);                                                   \
  template Tensor<R> abs(const Tensor<R>&);                                                       \
  template Tensor<R> log(const Tensor<R>&);                                                       \
  template Tensor<R> sum(const Tensor<R>&);                                                       \
  template Tensor<R> mean(const Tensor<R>&);                                                      \
  template Tensor<R> sum_axis(const Tensor<R>&, std::ptrdiff_t, bool);                            \
  template Tensor<R> mean_axis(const Tensor<R>&, std::ptrdiff_t, bool);                           \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                            \
  template Tensor<R> permute(const Tensor<R>&, const std::vector<std::size_t>&);                  \
  template Tensor<R> transpose_last(const Tensor<R>&);                                            \
  template Tensor<R> concat_last(const std::vector<Tensor<R>>&);                                  \
  template Tensor<R> embedding(const Tensor<R>&, const IndexTensor&);                             \
  template Tensor<R> unfold(const Tensor<R>&, std::size_t, std::size_t);                          \
  template Tensor<R> slice_last(const Tensor<R>&, std::size_t, std::size_t);                      \
  template Tensor<R> depthwise_conv1d(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,       \
                                      std::size_t);                                               \
  template Tensor<R> dropout(const Tensor<R>&, R, std::mt19937_64&, bool);                        \
  template void check_finite(const Tensor<R>&, const char*);                                      \
  template R grad_check(const std::function<Tensor<R>(const Tensor<R>&)>&, const Tensor<R>&, R);

FACTR_INSTANTIATE_OPS(float)
FACTR_INSTANTIATE_OPS(double)

}  // namespace factr::ad
