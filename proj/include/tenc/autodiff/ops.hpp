#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tenc/autodiff/tensor.hpp"
#include "tenc/rng.hpp"

// Differentiable primitives. Every function validates shapes, computes the
// forward value, rejects non-finite results, and records a backward closure
// when recording is active.
namespace tenc::ad {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Outer/axis/inner decomposition used by axis-wise reductions.
struct AxisSplit {
  std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  require(axis < s.size(), "axis " + std::to_string(axis) + " out of range for " + to_string(s));
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// True if `small` equals the trailing dimensions of `big`.
inline bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

}  // namespace detail

// ---------------------------------------------------------------- matmul

// [m,k]x[k,n] -> [m,n], or batched [B,m,k]x[B,k,n] -> [B,m,n].
// With transpose_b the second operand is read as [n,k] ([B,n,k]).
inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  using namespace detail;
  require(a.rank() == b.rank() && (a.rank() == 2 || a.rank() == 3),
          "matmul expects two rank-2 or two rank-3 tensors, got " + to_string(a.shape()) + " and " +
              to_string(b.shape()));
  const bool batched = a.rank() == 3;
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t m = a.dim(off), k = a.dim(off + 1);
  const std::size_t bk = transpose_b ? b.dim(off + 1) : b.dim(off);
  const std::size_t n = transpose_b ? b.dim(off) : b.dim(off + 1);
  require(k == bk && (!batched || b.dim(0) == batch),
          "matmul shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()) +
              (transpose_b ? "^T" : ""));
  const std::size_t bsz = k * n;
  std::vector<double> out(batch * m * n);
  for (std::size_t t = 0; t < batch; ++t) {
    CMapMat A(a.values().data() + t * m * k, m, k);
    MapMat C(out.data() + t * m * n, m, n);
    if (transpose_b) {
      CMapMat B(b.values().data() + t * bsz, n, k);
      C.noalias() = A * B.transpose();
    } else {
      CMapMat B(b.values().data() + t * bsz, k, n);
      C.noalias() = A * B;
    }
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  NodePtr an = a.node(), bn = b.node();
  return emit("matmul", {an, bn}, std::move(shape), std::move(out),
              [an, bn, batch, m, k, n, bsz, transpose_b](Node& o) {
                double* ga = grad_buffer(*an);
                double* gb = grad_buffer(*bn);
                for (std::size_t t = 0; t < batch; ++t) {
                  CMapMat G(o.grad.data() + t * m * n, m, n);
                  if (ga) {
                    MapMat GA(ga + t * m * k, m, k);
                    if (transpose_b) {
                      GA.noalias() += G * CMapMat(bn->value.data() + t * bsz, n, k);
                    } else {
                      GA.noalias() += G * CMapMat(bn->value.data() + t * bsz, k, n).transpose();
                    }
                  }
                  if (gb) {
                    CMapMat A(an->value.data() + t * m * k, m, k);
                    if (transpose_b) {
                      MapMat(gb + t * bsz, n, k).noalias() += G.transpose() * A;
                    } else {
                      MapMat(gb + t * bsz, k, n).noalias() += A.transpose() * G;
                    }
                  }
                }
              });
}

inline Tensor transpose(const Tensor& x) {
  using namespace detail;
  require(x.rank() == 2, "transpose expects a rank-2 tensor, got " + to_string(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  MapMat(out.data(), c, r) = CMapMat(x.values().data(), r, c).transpose();
  NodePtr xn = x.node();
  return emit("transpose", {xn}, Shape{c, r}, std::move(out), [xn, r, c](Node& o) {
    if (double* g = grad_buffer(*xn)) MapMat(g, r, c) += CMapMat(o.grad.data(), c, r).transpose();
  });
}

// ------------------------------------------------------------ elementwise

namespace detail {

enum class Binary { kAdd, kSub, kMul };

inline Tensor binary(Binary kind, const Tensor& a, const Tensor& b) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  const char* name = names[static_cast<int>(kind)];
  // The smaller operand broadcasts over the leading axes of the larger.
  const bool b_small = is_suffix(a.shape(), b.shape());
  const bool a_small = !b_small && is_suffix(b.shape(), a.shape());
  require(b_small || a_small, std::string(name) + " shape mismatch " + to_string(a.shape()) + " vs " +
                                  to_string(b.shape()));
  const Shape& big_shape = b_small ? a.shape() : b.shape();
  const std::size_t n = numel_of(big_shape);
  const std::size_t na = a.numel(), nb = b.numel();
  const std::size_t block = std::min(na, nb);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(n);
  // Walk the big operand in blocks the size of the small one.
  for (std::size_t base = 0; base < n; base += block) {
    const double* x = av + (na == block ? 0 : base);
    const double* y = bv + (nb == block ? 0 : base);
    double* z = out.data() + base;
    switch (kind) {
      case Binary::kAdd:
        for (std::size_t i = 0; i < block; ++i) z[i] = x[i] + y[i];
        break;
      case Binary::kSub:
        for (std::size_t i = 0; i < block; ++i) z[i] = x[i] - y[i];
        break;
      case Binary::kMul:
        for (std::size_t i = 0; i < block; ++i) z[i] = x[i] * y[i];
        break;
    }
  }
  NodePtr an = a.node(), bn = b.node();
  return emit(name, {an, bn}, big_shape, std::move(out), [an, bn, kind, n, na, nb, block](Node& o) {
    const double* go = o.grad.data();
    double* ga = grad_buffer(*an);
    double* gb = grad_buffer(*bn);
    for (std::size_t base = 0; base < n; base += block) {
      const double* g = go + base;
      const std::size_t oa = na == block ? 0 : base;
      const std::size_t ob = nb == block ? 0 : base;
      if (ga) {
        double* d = ga + oa;
        if (kind == Binary::kMul) {
          const double* y = bn->value.data() + ob;
          for (std::size_t i = 0; i < block; ++i) d[i] += g[i] * y[i];
        } else {
          for (std::size_t i = 0; i < block; ++i) d[i] += g[i];
        }
      }
      if (gb) {
        double* d = gb + ob;
        if (kind == Binary::kMul) {
          const double* x = an->value.data() + oa;
          for (std::size_t i = 0; i < block; ++i) d[i] += g[i] * x[i];
        } else if (kind == Binary::kSub) {
          for (std::size_t i = 0; i < block; ++i) d[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < block; ++i) d[i] += g[i];
        }
      }
    }
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary(detail::Binary::kAdd, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary(detail::Binary::kSub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary(detail::Binary::kMul, a, b); }

inline Tensor scale(const Tensor& x, double c) {
  using namespace detail;
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= c;
  NodePtr xn = x.node();
  return emit("scale", {xn}, x.shape(), std::move(out), [xn, c](Node& o) {
    if (double* g = grad_buffer(*xn)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += c * o.grad[i];
    }
  });
}

namespace detail {

template <class F, class DF>
Tensor unary(const char* name, const Tensor& x, F f, DF df) {
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  NodePtr xn = x.node();
  return emit(name, {xn}, x.shape(), std::move(out), [xn, df](Node& o) {
    if (double* g = grad_buffer(*xn)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * df(xn->value[i], o.value[i]);
    }
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

// log(1 + e^x) without overflow; derivative is sigmoid(x).
inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return detail::stable_sigmoid(v); });
}

// Exact (erf) GELU as used by BERT. The normal cdf is kept for backward.
inline Tensor gelu(const Tensor& x) {
  using namespace detail;
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const auto xv = x.values();
  std::vector<double> cdf(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    cdf[i] = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
    out[i] = xv[i] * cdf[i];
  }
  NodePtr xn = x.node();
  return emit("gelu", {xn}, x.shape(), std::move(out), [xn, cdf = std::move(cdf)](Node& o) {
    double* g = grad_buffer(*xn);
    if (!g) return;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
      const double v = xn->value[i];
      g[i] += o.grad[i] * (cdf[i] + v * kInvSqrt2Pi * std::exp(-0.5 * v * v));
    }
  });
}

// ------------------------------------------------------------ reductions

inline Tensor sum(const Tensor& x) {
  using namespace detail;
  double s = 0.0;
  for (double v : x.values()) s += v;
  NodePtr xn = x.node();
  return emit("sum", {xn}, Shape{1}, std::vector<double>{s}, [xn](Node& o) {
    if (double* g = grad_buffer(*xn)) {
      for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += o.grad[0];
    }
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

inline Tensor dot(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "dot shape mismatch " + to_string(a.shape()) + " vs " +
                                              to_string(b.shape()));
  return sum(mul(a, b));
}

namespace detail {

inline void check_mask(const Tensor& x, std::span<const std::uint8_t> mask, const char* op) {
  require(mask.empty() || mask.size() == x.numel(),
          std::string(op) + " mask size " + std::to_string(mask.size()) + " does not match " +
              to_string(x.shape()));
}

}  // namespace detail

// Softmax along `axis`. Entries whose mask byte is 0 get probability exactly
// zero (equivalent to a -inf logit) and receive no gradient. Every slice must
// keep at least one unmasked entry.
inline Tensor softmax(const Tensor& x, std::size_t axis, std::span<const std::uint8_t> mask = {}) {
  using namespace detail;
  check_mask(x, mask, "softmax");
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(x.numel(), 0.0);
  const bool masked = !mask.empty();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) {
        const std::size_t idx = base + j * s.inner;
        if (!masked || mask[idx]) mx = std::max(mx, xv[idx]);
      }
      if (mx == -std::numeric_limits<double>::infinity()) {
        throw Error("autodiff", "softmax slice is fully masked");
      }
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const std::size_t idx = base + j * s.inner;
        if (!masked || mask[idx]) z += (out[idx] = std::exp(xv[idx] - mx));
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= z;
    }
  }
  NodePtr xn = x.node();
  return emit("softmax", {xn}, x.shape(), std::move(out), [xn, s](Node& o) {
    double* g = grad_buffer(*xn);
    if (!g) return;
    for (std::size_t oi = 0; oi < s.outer; ++oi) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = oi * s.len * s.inner + in;
        double d = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          d += o.grad[idx] * o.value[idx];
        }
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          g[idx] += o.value[idx] * (o.grad[idx] - d);
        }
      }
    }
  });
}

// log(sum(exp(x))) over the last axis, skipping masked entries. Output drops
// the last axis ([N, M] -> [N]).
inline Tensor logsumexp(const Tensor& x, std::span<const std::uint8_t> mask = {}) {
  using namespace detail;
  check_mask(x, mask, "logsumexp");
  require(x.rank() >= 1, "logsumexp on rank-0 tensor");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  const bool masked = !mask.empty();
  const auto xv = x.values();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < len; ++j) {
      if (!masked || mask[r * len + j]) mx = std::max(mx, xv[r * len + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) throw Error("autodiff", "logsumexp row is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      if (!masked || mask[r * len + j]) z += std::exp(xv[r * len + j] - mx);
    }
    out[r] = mx + std::log(z);
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape = {1};
  NodePtr xn = x.node();
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return emit("logsumexp", {xn}, std::move(shape), std::move(out), [xn, m = std::move(m), rows, len](Node& o) {
    double* g = grad_buffer(*xn);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = r * len + j;
        if (!m.empty() && !m[idx]) continue;
        g[idx] += o.grad[r] * std::exp(xn->value[idx] - o.value[r]);
      }
    }
  });
}

// --------------------------------------------------------- normalization

// Normalizes over the last axis, then applies gain and bias (both of the
// last-axis size).
inline Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  using namespace detail;
  require(x.rank() >= 1, "layernorm on rank-0 tensor");
  const std::size_t d = x.shape().back();
  require(gain.shape() == Shape{d} && bias.shape() == Shape{d},
          "layernorm gain/bias must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
  return emit("layernorm", {xn, gn, bn}, x.shape(), std::move(out),
              [xn, gn, bn, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
                double* gx = grad_buffer(*xn);
                double* gg = grad_buffer(*gn);
                double* gbias = grad_buffer(*bn);
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* go = o.grad.data() + r * d;
                  const double* h = xhat.data() + r * d;
                  if (gg || gbias) {
                    for (std::size_t j = 0; j < d; ++j) {
                      if (gg) gg[j] += go[j] * h[j];
                      if (gbias) gbias[j] += go[j];
                    }
                  }
                  if (gx) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dh = go[j] * gn->value[j];
                      s1 += dh;
                      s2 += dh * h[j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dh = go[j] * gn->value[j];
                      gx[r * d + j] += inv_std[r] * (dh - inv_d * s1 - h[j] * inv_d * s2);
                    }
                  }
                }
              });
}

// Inverted dropout: survivors are scaled by 1/(1-p). Identity when not
// training or p == 0 (no random draws are consumed in that case).
inline Tensor dropout(const Tensor& x, double p, Rng* rng, bool training) {
  using namespace detail;
  if (!(p >= 0.0 && p < 1.0)) throw Error("autodiff", "dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw Error("autodiff", "dropout in training mode requires an rng");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(x.numel());
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    factor[i] = uniform01(*rng) < p ? 0.0 : keep_scale;
    out[i] = xv[i] * factor[i];
  }
  NodePtr xn = x.node();
  return emit("dropout", {xn}, x.shape(), std::move(out), [xn, factor = std::move(factor)](Node& o) {
    if (double* g = grad_buffer(*xn)) {
      for (std::size_t i = 0; i < factor.size(); ++i) g[i] += o.grad[i] * factor[i];
    }
  });
}

// ------------------------------------------------------------ structural

inline Tensor reshape(const Tensor& x, Shape shape) {
  using namespace detail;
  require(numel_of(shape) == x.numel(), "cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  NodePtr xn = x.node();
  return emit("reshape", {xn}, std::move(shape), std::move(out), [xn](Node& o) {
    if (double* g = grad_buffer(*xn)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

// [A,B,C,D] -> [A,C,B,D]; splits/merges attention heads.
inline Tensor swap_middle_axes(const Tensor& x) {
  using namespace detail;
  require(x.rank() == 4, "swap_middle_axes expects rank 4, got " + to_string(x.shape()));
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(xv.data() + ((a * B + b) * C + c) * D, D, out.data() + ((a * C + c) * B + b) * D);
  NodePtr xn = x.node();
  return emit("swap_middle_axes", {xn}, Shape{A, C, B, D}, std::move(out), [xn, A, B, C, D](Node& o) {
    double* g = grad_buffer(*xn);
    if (!g) return;
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          const double* src = o.grad.data() + ((a * C + c) * B + b) * D;
          double* dst = g + ((a * B + b) * C + c) * D;
          for (std::size_t e = 0; e < D; ++e) dst[e] += src[e];
        }
  });
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  using namespace detail;
  require(!xs.empty(), "concat of zero tensors");
  const Shape& first = xs.front().shape();
  require(axis < first.size(), "concat axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& t : xs) {
    require(t.rank() == first.size(), "concat rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      require(i == axis || t.dim(i) == first[i],
              "concat shape mismatch " + to_string(first) + " vs " + to_string(t.shape()));
    }
    shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_stride = shape[axis] * inner;
  std::vector<double> out(numel_of(shape));
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> widths, offsets;
  std::size_t off = 0;
  for (const Tensor& t : xs) {
    const std::size_t w = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.values().data() + o * w, w, out.data() + o * out_stride + off);
    }
    nodes.push_back(t.node());
    widths.push_back(w);
    offsets.push_back(off);
    off += w;
  }
  return emit("concat", nodes, std::move(shape), std::move(out),
              [nodes, widths, offsets, outer, out_stride](Node& o) {
                for (std::size_t k = 0; k < nodes.size(); ++k) {
                  double* g = grad_buffer(*nodes[k]);
                  if (!g) continue;
                  for (std::size_t r = 0; r < outer; ++r) {
                    const double* src = o.grad.data() + r * out_stride + offsets[k];
                    for (std::size_t e = 0; e < widths[k]; ++e) g[r * widths[k] + e] += src[e];
                  }
                }
              });
}

// Gathers rows of a [V, d] table: result [ids.size(), d].
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  using namespace detail;
  require(table.rank() == 2, "embedding table must be rank 2, got " + to_string(table.shape()));
  require(!ids.empty(), "embedding lookup with no ids");
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < V, "embedding id " + std::to_string(ids[i]) + " out of range " + std::to_string(V));
    std::copy_n(table.values().data() + ids[i] * d, d, out.data() + i * d);
  }
  NodePtr tn = table.node();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return emit("embedding_lookup", {tn}, Shape{ids.size(), d}, std::move(out), [tn, idv = std::move(idv), d](Node& o) {
    double* g = grad_buffer(*tn);
    if (!g) return;
    for (std::size_t i = 0; i < idv.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) g[idv[i] * d + j] += o.grad[i * d + j];
    }
  });
}

// ---------------------------------------------------------------- cosine

// Each row divided by its L2 norm. Rows must have nonzero norm.
inline Tensor normalize_rows(const Tensor& x) {
  using namespace detail;
  require(x.rank() == 2, "normalize_rows expects rank 2, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  std::vector<double> norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv[r * d + j] * xv[r * d + j];
    const double nr = std::sqrt(s);
    if (!(nr > 0.0)) throw Error("autodiff", "zero-norm vector in cosine/normalize (row " + std::to_string(r) + ")");
    norms[r] = nr;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] / nr;
  }
  NodePtr xn = x.node();
  return emit("normalize_rows", {xn}, x.shape(), std::move(out), [xn, n, d, norms = std::move(norms)](Node& o) {
    double* g = grad_buffer(*xn);
    if (!g) return;
    for (std::size_t r = 0; r < n; ++r) {
      double proj = 0.0;
      for (std::size_t j = 0; j < d; ++j) proj += o.grad[r * d + j] * o.value[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        g[r * d + j] += (o.grad[r * d + j] - proj * o.value[r * d + j]) / norms[r];
      }
    }
  });
}

// Row-wise cosine of two [N, d] tensors -> [N].
inline Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && a.shape() == b.shape(),
                  "cosine_rows shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const std::size_t n = a.dim(0), d = a.dim(1);
  Tensor prod = mul(normalize_rows(a), normalize_rows(b));
  // Row sums via a ones vector keeps this inside existing primitives.
  Tensor ones = Tensor::constant(Shape{d, 1}, std::vector<double>(d, 1.0));
  return reshape(matmul(prod, ones), Shape{n});
}

// Cosine of two vectors of equal shape -> scalar.
inline Tensor cosine(const Tensor& u, const Tensor& v) {
  detail::require(u.shape() == v.shape(), "cosine shape mismatch " + to_string(u.shape()) + " vs " +
                                              to_string(v.shape()));
  const Shape row{1, u.numel()};
  return cosine_rows(reshape(u, row), reshape(v, row));
}

}  // namespace tenc::ad
