#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "otslot/error.hpp"
#include "otslot/tensor.hpp"

// Differentiable primitives over Tensor. Every op computes its forward value
// eagerly and, when any input is tape-linked, records a backward rule.
namespace otslot::ops {

namespace detail {

inline Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->linked()) continue;
    if (tape && tape != t->tape()) throw TapeError("operation mixes tensors from different tapes");
    tape = t->tape();
  }
  return tape;
}

using Storage = std::shared_ptr<const std::vector<double>>;

inline Storage storage(const Tensor& t) { return t.storage(); }

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

inline Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  if (b.size() == 1) return Broadcast::kRightScalar;
  throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()) + " are not broadcast-compatible");
}

// out = f(x, y); backward uses dfdx(x, y, out) and dfdy(x, y, out).
template <class F, class Dx, class Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, Dx dfdx, Dy dfdy) {
  const Broadcast mode = broadcast_mode(a, b, name);
  const Shape shape = mode == Broadcast::kLeftScalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  const auto& x = a.values();
  const auto& y = b.values();
  const std::size_t sx = mode == Broadcast::kLeftScalar ? 0 : 1;
  const std::size_t sy = mode == Broadcast::kRightScalar ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i * sx], y[i * sy]);
  Tensor result(shape, std::move(out));
  Tape* tape = tape_of({&a, &b});
  if (!tape) return result;
  auto xs = storage(a);
  auto ys = storage(b);
  auto os = storage(result);
  return tape->record(
      result, {&a, &b},
      [xs, ys, os, sx, sy, n, dfdx, dfdy](std::span<const double> g, const GradSink& sink) {
        const auto& x = *xs;
        const auto& y = *ys;
        const auto& o = *os;
        if (sink.wants(0)) {
          auto ga = sink.input(0);
          for (std::size_t i = 0; i < n; ++i) ga[i * sx] += g[i] * dfdx(x[i * sx], y[i * sy], o[i]);
        }
        if (sink.wants(1)) {
          auto gb = sink.input(1);
          for (std::size_t i = 0; i < n; ++i) gb[i * sy] += g[i] * dfdy(x[i * sx], y[i * sy], o[i]);
        }
      });
}

// out = f(x); backward uses df(x, out).
template <class F, class D>
Tensor unary(const Tensor& a, F f, D df) {
  const auto& x = a.values();
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i]);
  Tensor result(a.shape(), std::move(out));
  if (!a.linked()) return result;
  auto xs = storage(a);
  auto os = storage(result);
  return a.tape()->record(result, {&a}, [xs, os, df](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    const auto& x = *xs;
    const auto& o = *os;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], o[i]);
  });
}

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
  Shape reduced;
};

inline AxisLayout axis_layout(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(shape));
  }
  AxisLayout layout;
  for (std::size_t d = 0; d < axis; ++d) layout.outer *= shape[d];
  layout.length = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) layout.inner *= shape[d];
  layout.reduced = shape;
  layout.reduced.erase(layout.reduced.begin() + static_cast<std::ptrdiff_t>(axis));
  if (layout.length == 0) {
    throw ShapeError(std::string(op) + ": reduction over empty axis " + std::to_string(axis));
  }
  return layout;
}

using ConstMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Broadcasting is limited to scalar-with-array.

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  const auto& y = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw DomainError("div: zero divisor", i);
  }
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

inline Tensor neg(const Tensor& a) {
  return detail::unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

inline Tensor log(const Tensor& a) {
  const auto& x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw DomainError("log: nonpositive operand", i);
  }
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// max(x, s) elementwise; the subgradient at x == s is taken as 0.
inline Tensor max_with_scalar(const Tensor& a, double s) {
  return detail::unary(
      a, [s](double x) { return x > s ? x : s; }, [s](double x, double) { return x > s ? 1.0 : 0.0; });
}

inline Tensor relu(const Tensor& a) { return max_with_scalar(a, 0.0); }

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

inline Tensor sqrt(const Tensor& a) {
  const auto& x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) throw DomainError("sqrt: negative operand", i);
  }
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double o) { return 0.5 / o; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// x·log(x) with the limit value 0 at x = 0. The derivative 1 + log(x) is
/// reported as 0 at x = 0.
inline Tensor xlogx(const Tensor& a) {
  const auto& x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) throw DomainError("xlogx: negative operand", i);
  }
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 + std::log(x) : 0.0; });
}

inline Tensor scale(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor add_scalar(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }

// ---------------------------------------------------------------------------
// Structural ops.

/// Same values with no tape link; gradients never flow through it.
inline Tensor detach(const Tensor& a) { return a.detached(); }

/// Forward value of `value`, backward routed to `target` as identity.
inline Tensor straight_through(const Tensor& value, const Tensor& target) {
  if (value.shape() != target.shape()) {
    throw ShapeError("straight_through: shapes " + shape_string(value.shape()) + " and " +
                     shape_string(target.shape()) + " differ");
  }
  Tensor result = value.detached();
  if (!target.linked()) return result;
  return target.tape()->record(result, {&target}, [](std::span<const double> g, const GradSink& sink) {
    auto gt = sink.input(0);
    for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  Tensor result = a.reshaped_value(std::move(shape));
  if (!a.linked()) return result;
  return a.tape()->record(result, {&a}, [](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto& x = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  Tensor result(Shape{n, m}, std::move(out));
  if (!a.linked()) return result;
  return a.tape()->record(result, {&a}, [m, n](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

/// Rows [begin, begin + count) of a matrix.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (begin + count > m) throw ShapeError("slice_rows: range exceeds row count");
  const auto& x = a.values();
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  Tensor result(Shape{count, n}, std::move(out));
  if (!a.linked()) return result;
  const std::size_t offset = begin * n;
  return a.tape()->record(result, {&a}, [offset](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

/// Matrix whose i-th row is row `index[i]` of `a`.
inline Tensor gather_rows(const Tensor& a, std::vector<std::size_t> index) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const auto& x = a.values();
  std::vector<double> out(index.size() * n);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= m) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(index[r] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  Tensor result(Shape{index.size(), n}, std::move(out));
  if (!a.linked()) return result;
  return a.tape()->record(result, {&a},
                          [index = std::move(index), n](std::span<const double> g, const GradSink& sink) {
                            auto ga = sink.input(0);
                            for (std::size_t r = 0; r < index.size(); ++r)
                              for (std::size_t j = 0; j < n; ++j) ga[index[r] * n + j] += g[r * n + j];
                          });
}

/// Vector v (length n) repeated as each of `rows` rows: out_ij = v_j.
inline Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
  v.require_rank(1);
  const std::size_t n = v.size();
  const auto& x = v.values();
  std::vector<double> out(rows * n);
  for (std::size_t i = 0; i < rows; ++i) std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  Tensor result(Shape{rows, n}, std::move(out));
  if (!v.linked()) return result;
  return v.tape()->record(result, {&v}, [rows, n](std::span<const double> g, const GradSink& sink) {
    auto gv = sink.input(0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
  });
}

/// Vector u (length m) repeated as each of `cols` columns: out_ij = u_i.
inline Tensor broadcast_cols(const Tensor& u, std::size_t cols) {
  u.require_rank(1);
  const std::size_t m = u.size();
  const auto& x = u.values();
  std::vector<double> out(m * cols);
  for (std::size_t i = 0; i < m; ++i) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * cols), cols, x[i]);
  Tensor result(Shape{m, cols}, std::move(out));
  if (!u.linked()) return result;
  return u.tape()->record(result, {&u}, [m, cols](std::span<const double> g, const GradSink& sink) {
    auto gu = sink.input(0);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j];
      gu[i] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  a.require_rank(2);
  b.require_rank(2);
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  {
    detail::ConstMap am(a.values().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    detail::ConstMap bm(b.values().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    detail::MutMap om(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    om.noalias() = am * bm;
  }
  Tensor result(Shape{m, n}, std::move(out));
  Tape* tape = detail::tape_of({&a, &b});
  if (!tape) return result;
  auto as = detail::storage(a);
  auto bs = detail::storage(b);
  return tape->record(result, {&a, &b}, [as, bs, m, k, n](std::span<const double> g, const GradSink& sink) {
    const auto M = static_cast<Eigen::Index>(m);
    const auto K = static_cast<Eigen::Index>(k);
    const auto N = static_cast<Eigen::Index>(n);
    detail::ConstMap gm(g.data(), M, N);
    if (sink.wants(0)) {
      detail::ConstMap bm(bs->data(), K, N);
      detail::MutMap ga(sink.input(0).data(), M, K);
      ga.noalias() += gm * bm.transpose();
    }
    if (sink.wants(1)) {
      detail::ConstMap am(as->data(), M, K);
      detail::MutMap gb(sink.input(1).data(), K, N);
      gb.noalias() += am.transpose() * gm;
    }
  });
}

/// M·x for an m×n matrix and a length-n vector.
inline Tensor matvec(const Tensor& mat, const Tensor& x) {
  mat.require_rank(2);
  x.require_rank(1);
  const std::size_t m = mat.rows();
  const std::size_t n = mat.cols();
  if (x.size() != n) throw ShapeError("matvec: vector length does not match matrix columns");
  const auto& a = mat.values();
  const auto& v = x.values();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * v[j];
    out[i] = acc;
  }
  Tensor result(Shape{m}, std::move(out));
  Tape* tape = detail::tape_of({&mat, &x});
  if (!tape) return result;
  auto as = detail::storage(mat);
  auto vs = detail::storage(x);
  return tape->record(result, {&mat, &x}, [as, vs, m, n](std::span<const double> g, const GradSink& sink) {
    if (sink.wants(0)) {
      auto ga = sink.input(0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * (*vs)[j];
    }
    if (sink.wants(1)) {
      auto gv = sink.input(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += g[i] * (*as)[i * n + j];
    }
  });
}

/// Mᵀ·y for an m×n matrix and a length-m vector.
inline Tensor matvec_transposed(const Tensor& mat, const Tensor& y) {
  mat.require_rank(2);
  y.require_rank(1);
  const std::size_t m = mat.rows();
  const std::size_t n = mat.cols();
  if (y.size() != m) throw ShapeError("matvec_transposed: vector length does not match matrix rows");
  const auto& a = mat.values();
  const auto& v = y.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a[i * n + j] * v[i];
  Tensor result(Shape{n}, std::move(out));
  Tape* tape = detail::tape_of({&mat, &y});
  if (!tape) return result;
  auto as = detail::storage(mat);
  auto vs = detail::storage(y);
  return tape->record(result, {&mat, &y}, [as, vs, m, n](std::span<const double> g, const GradSink& sink) {
    if (sink.wants(0)) {
      auto ga = sink.input(0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (*vs)[i] * g[j];
    }
    if (sink.wants(1)) {
      auto gv = sink.input(1);
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += (*as)[i * n + j] * g[j];
        gv[i] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions.

/// Sum over `axis`; the axis is removed from the shape.
inline Tensor sum(const Tensor& a, std::size_t axis) {
  const auto layout = detail::axis_layout(a.shape(), axis, "sum");
  const auto& x = a.values();
  std::vector<double> out(layout.outer * layout.inner, 0.0);
  for (std::size_t o = 0; o < layout.outer; ++o)
    for (std::size_t l = 0; l < layout.length; ++l)
      for (std::size_t i = 0; i < layout.inner; ++i)
        out[o * layout.inner + i] += x[(o * layout.length + l) * layout.inner + i];
  Tensor result(layout.reduced, std::move(out));
  if (!a.linked()) return result;
  return a.tape()->record(result, {&a}, [layout](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    for (std::size_t o = 0; o < layout.outer; ++o)
      for (std::size_t l = 0; l < layout.length; ++l)
        for (std::size_t i = 0; i < layout.inner; ++i)
          ga[(o * layout.length + l) * layout.inner + i] += g[o * layout.inner + i];
  });
}

/// Sum of every element, as a scalar.
inline Tensor sum(const Tensor& a) {
  const auto& x = a.values();
  double acc = 0.0;
  for (double v : x) acc += v;
  Tensor result = Tensor::scalar(acc);
  if (!a.linked()) return result;
  return a.tape()->record(result, {&a}, [](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    for (double& v : ga) v += g[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// log Σ exp over `axis`, shifted by the per-slice maximum.
inline Tensor logsumexp(const Tensor& a, std::size_t axis) {
  const auto layout = detail::axis_layout(a.shape(), axis, "logsumexp");
  const auto& x = a.values();
  std::vector<double> out(layout.outer * layout.inner);
  for (std::size_t o = 0; o < layout.outer; ++o) {
    for (std::size_t i = 0; i < layout.inner; ++i) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < layout.length; ++l)
        peak = std::max(peak, x[(o * layout.length + l) * layout.inner + i]);
      if (!std::isfinite(peak)) {
        out[o * layout.inner + i] = peak;
        continue;
      }
      double acc = 0.0;
      for (std::size_t l = 0; l < layout.length; ++l)
        acc += std::exp(x[(o * layout.length + l) * layout.inner + i] - peak);
      out[o * layout.inner + i] = peak + std::log(acc);
    }
  }
  Tensor result(layout.reduced, std::move(out));
  if (!a.linked()) return result;
  auto xs = detail::storage(a);
  auto os = detail::storage(result);
  return a.tape()->record(result, {&a}, [xs, os, layout](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    for (std::size_t o = 0; o < layout.outer; ++o)
      for (std::size_t l = 0; l < layout.length; ++l)
        for (std::size_t i = 0; i < layout.inner; ++i) {
          const std::size_t r = o * layout.inner + i;
          const std::size_t idx = (o * layout.length + l) * layout.inner + i;
          ga[idx] += g[r] * std::exp((*xs)[idx] - (*os)[r]);
        }
  });
}

/// Softmax along `axis`; each slice sums to one.
inline Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto layout = detail::axis_layout(a.shape(), axis, "softmax");
  const auto& x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < layout.outer; ++o) {
    for (std::size_t i = 0; i < layout.inner; ++i) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < layout.length; ++l)
        peak = std::max(peak, x[(o * layout.length + l) * layout.inner + i]);
      double acc = 0.0;
      for (std::size_t l = 0; l < layout.length; ++l) {
        const std::size_t idx = (o * layout.length + l) * layout.inner + i;
        out[idx] = std::exp(x[idx] - peak);
        acc += out[idx];
      }
      for (std::size_t l = 0; l < layout.length; ++l) out[(o * layout.length + l) * layout.inner + i] /= acc;
    }
  }
  Tensor result(a.shape(), std::move(out));
  if (!a.linked()) return result;
  auto os = detail::storage(result);
  return a.tape()->record(result, {&a}, [os, layout](std::span<const double> g, const GradSink& sink) {
    auto ga = sink.input(0);
    const auto& s = *os;
    for (std::size_t o = 0; o < layout.outer; ++o)
      for (std::size_t i = 0; i < layout.inner; ++i) {
        double dot = 0.0;
        for (std::size_t l = 0; l < layout.length; ++l) {
          const std::size_t idx = (o * layout.length + l) * layout.inner + i;
          dot += g[idx] * s[idx];
        }
        for (std::size_t l = 0; l < layout.length; ++l) {
          const std::size_t idx = (o * layout.length + l) * layout.inner + i;
          ga[idx] += s[idx] * (g[idx] - dot);
        }
      }
  });
}

/// Frobenius norm as a scalar tensor.
inline Tensor frobenius_norm(const Tensor& a) { return sqrt(sum(square(a))); }

}  // namespace otslot::ops
