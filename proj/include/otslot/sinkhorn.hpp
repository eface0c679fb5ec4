#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "otslot/error.hpp"
#include "otslot/ops.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

/// Row mass targets `a` (length m) and column mass targets `b` (length n).
/// Either may be tape-linked, e.g. when produced by learned heads.
struct Marginals {
  Tensor a;
  Tensor b;

  /// a_i = 1 and b_j = m / n, so both sides carry mass m.
  static Marginals uniform(std::size_t m, std::size_t n) {
    return {Tensor::ones({m}), Tensor::full({n}, static_cast<double>(m) / static_cast<double>(n))};
  }

  std::size_t rows() const { return a.size(); }
  std::size_t cols() const { return b.size(); }

  void validate() const {
    if (a.rank() != 1 || b.rank() != 1) throw ShapeError("marginals must be vectors");
    double sa = 0.0;
    double sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(a[i] >= 0.0) || !std::isfinite(a[i])) throw MarginalError("row marginal entry " + std::to_string(i) + " is negative or non-finite");
      sa += a[i];
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (!(b[j] >= 0.0) || !std::isfinite(b[j])) throw MarginalError("column marginal entry " + std::to_string(j) + " is negative or non-finite");
      sb += b[j];
    }
    if (std::abs(sa - sb) > 1e-9 * std::max(std::max(sa, sb), 1.0)) {
      throw MarginalError("marginal mass mismatch: sum(a) = " + std::to_string(sa) +
                          ", sum(b) = " + std::to_string(sb));
    }
  }

  Marginals detached() const { return {a.detached(), b.detached()}; }
};

enum class SinkhornDomain { kAuto, kPlain, kLog };

struct SinkhornConfig {
  double temperature = 1.0;
  std::size_t max_iterations = 1000;
  /// Stop once the largest absolute marginal violation is at most this.
  /// Zero runs exactly `max_iterations` iterations.
  double tolerance = 1e-6;
  /// kAuto selects the log domain below kLogDomainBelow.
  SinkhornDomain domain = SinkhornDomain::kAuto;

  static constexpr double kLogDomainBelow = 0.05;

  bool log_domain() const {
    if (domain == SinkhornDomain::kAuto) return temperature < kLogDomainBelow;
    return domain == SinkhornDomain::kLog;
  }

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("sinkhorn temperature must be positive");
    if (max_iterations < 1) throw ConfigError("sinkhorn max_iterations must be at least 1");
    if (!(tolerance >= 0.0)) throw ConfigError("sinkhorn tolerance must be nonnegative");
  }
};

/// Accumulated row and column normalizers, P = diag(u)·exp(−C/τ)·diag(v).
/// With `log_domain` set, `u` and `v` hold log u and log v.
struct ScalingVectors {
  Tensor u;
  Tensor v;
  bool log_domain = false;

  ScalingVectors in_domain(bool log) const {
    if (log == log_domain) return *this;
    if (log) return {ops::log(u), ops::log(v), true};
    return {ops::exp(u), ops::exp(v), false};
  }
};

struct TransportPlan {
  Tensor values;
  bool converged = false;
  std::size_t iterations = 0;
  /// Largest absolute row or column marginal violation at exit.
  double marginal_violation = std::numeric_limits<double>::infinity();

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
};

struct SinkhornResult {
  TransportPlan plan;
  ScalingVectors scaling;
};

/// Reapplies scaling vectors to the Gibbs kernel of `cost` (values only).
inline Tensor apply_scaling(const Tensor& cost, double temperature, const ScalingVectors& scaling) {
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = cost(i, j) / temperature;
      out[i * n + j] = scaling.log_domain ? std::exp(scaling.u[i] + scaling.v[j] - c)
                                          : scaling.u[i] * std::exp(-c) * scaling.v[j];
    }
  }
  return Tensor::matrix(m, n, std::move(out));
}

namespace detail {

inline void check_sinkhorn_inputs(const Tensor& cost, const Marginals& marg) {
  cost.require_rank(2);
  if (marg.rows() != cost.rows() || marg.cols() != cost.cols()) {
    throw ShapeError("sinkhorn: cost " + shape_string(cost.shape()) + " does not match marginals (" +
                     std::to_string(marg.rows()) + ", " + std::to_string(marg.cols()) + ")");
  }
  if (!cost.all_finite()) throw NumericalError("sinkhorn: cost matrix has non-finite entries");
  marg.validate();
  for (std::size_t i = 0; i < marg.a.size(); ++i)
    if (marg.a[i] <= 0.0) throw MarginalError("sinkhorn requires strictly positive marginals (a[" + std::to_string(i) + "] = 0)");
  for (std::size_t j = 0; j < marg.b.size(); ++j)
    if (marg.b[j] <= 0.0) throw MarginalError("sinkhorn requires strictly positive marginals (b[" + std::to_string(j) + "] = 0)");
}

inline void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericalError(std::string("sinkhorn: non-finite ") + what +
                         " (temperature too small for the plain domain?)");
  }
}

inline void require_positive(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || !std::isfinite(t[i])) {
      throw NumericalError(std::string("sinkhorn: ") + what + " entry " + std::to_string(i) +
                           " underflowed or overflowed (temperature too small for the plain domain?)");
    }
  }
}

/// Iterates of one Sinkhorn solve. Plain domain keeps u_k, v_k, s_k = Kᵀu_{k−1}
/// and w_k = K v_k; the log domain keeps f_k = log u_k, g_k = log v_k and the
/// column/row log-sum-exps lc_k, lr_k. Index 0 of `u`/`v` is the start point;
/// `s`/`w` are indexed from iteration 1 at position 0.
struct Trajectory {
  bool log_domain = false;
  double temperature = 1.0;
  Tensor kernel;  // K = exp(−C/τ), or C/τ in the log domain
  Tensor log_a;
  Tensor log_b;
  std::vector<Tensor> u;
  std::vector<Tensor> v;
  std::vector<Tensor> s;
  std::vector<Tensor> w;
  Tensor plan;
  std::size_t iterations = 0;
  bool converged = false;
  double violation = std::numeric_limits<double>::infinity();
};

inline double max_abs_gap(const std::vector<double>& x, const Tensor& target) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(x[i] - target[i]);
    if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, d);
  }
  return worst;
}

/// Largest column marginal violation of diag(u)·K·diag(v), values only.
inline double column_violation(const Tensor& K, const Tensor& u, const Tensor& v, const Tensor& b, bool log_domain) {
  const std::size_t m = K.rows();
  const std::size_t n = K.cols();
  std::vector<double> mass(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (log_domain) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i) peak = std::max(peak, u[i] - K(i, j));
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += std::exp(u[i] - K(i, j) - peak);
      mass[j] = std::exp(v[j] + peak + std::log(acc));
    } else {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += K(i, j) * u[i];
      mass[j] = v[j] * acc;
    }
  }
  return max_abs_gap(mass, b);
}

inline Trajectory run_sinkhorn(const Tensor& cost, const Marginals& marg, const SinkhornConfig& cfg,
                               const std::optional<ScalingVectors>& warm, bool keep) {
  cfg.validate();
  check_sinkhorn_inputs(cost, marg);
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  Trajectory tr;
  tr.log_domain = cfg.log_domain();
  tr.temperature = cfg.temperature;
  if (warm && (warm->u.size() != m || warm->v.size() != n)) {
    throw ShapeError("sinkhorn: warm-start vectors do not match the cost matrix");
  }
  std::optional<ScalingVectors> start;
  if (warm) start = warm->in_domain(tr.log_domain);

  Tensor u;
  Tensor v;
  if (tr.log_domain) {
    tr.kernel = ops::scale(cost, 1.0 / cfg.temperature);
    tr.log_a = ops::log(marg.a);
    tr.log_b = ops::log(marg.b);
    u = start ? start->u : Tensor::zeros({m});
    v = start ? start->v : Tensor::zeros({n});
  } else {
    tr.kernel = ops::exp(ops::scale(cost, -1.0 / cfg.temperature));
    require_finite(tr.kernel, "Gibbs kernel");
    u = start ? start->u : Tensor::ones({m});
    v = start ? start->v : Tensor::ones({n});
  }
  if (keep) {
    tr.u.push_back(u);
    tr.v.push_back(v);
  }

  const Tensor& K = tr.kernel;
  std::size_t it = 0;
  while (true) {
    if (it == cfg.max_iterations) {
      tr.violation = column_violation(K, u, v, marg.b, tr.log_domain);
      tr.converged = tr.violation <= cfg.tolerance;
      break;
    }
    // Column statistic for the next v update. Rows are exact after the first
    // iteration, so it also yields the marginal violation.
    Tensor col = tr.log_domain ? ops::logsumexp(ops::sub(ops::broadcast_cols(u, n), K), 0)
                               : ops::matvec_transposed(K, u);
    if (it > 0 && cfg.tolerance > 0.0) {
      std::vector<double> col_mass(n);
      for (std::size_t j = 0; j < n; ++j)
        col_mass[j] = tr.log_domain ? std::exp(v[j] + col[j]) : v[j] * col[j];
      tr.violation = max_abs_gap(col_mass, marg.b);
      if (std::isnan(tr.violation)) throw NumericalError("sinkhorn: marginal violation is NaN");
      if (tr.violation <= cfg.tolerance) {
        tr.converged = true;
        break;
      }
    }

    Tensor row;
    if (tr.log_domain) {
      require_finite(col, "column log-sum-exp");
      v = ops::sub(tr.log_b, col);
      row = ops::logsumexp(ops::sub(ops::broadcast_rows(v, m), K), 1);
      require_finite(row, "row log-sum-exp");
      u = ops::sub(tr.log_a, row);
    } else {
      require_positive(col, "column kernel sum");
      v = ops::div(marg.b, col);
      row = ops::matvec(K, v);
      require_positive(row, "row kernel sum");
      u = ops::div(marg.a, row);
    }
    ++it;
    if (keep) {
      tr.s.push_back(col);
      tr.w.push_back(row);
      tr.u.push_back(u);
      tr.v.push_back(v);
    }
  }
  tr.iterations = it;
  if (!keep) {
    tr.u = {u};
    tr.v = {v};
  }

  if (tr.log_domain) {
    tr.plan = ops::exp(ops::sub(ops::add(ops::broadcast_cols(u, n), ops::broadcast_rows(v, m)), K));
  } else {
    tr.plan = ops::mul(ops::mul(K, ops::broadcast_rows(v, m)), ops::broadcast_cols(u, n));
  }
  require_finite(tr.plan, "transport plan");
  return tr;
}

inline SinkhornResult to_result(const Trajectory& tr, bool keep_links) {
  SinkhornResult result;
  result.plan.values = tr.plan;
  result.plan.converged = tr.converged;
  result.plan.iterations = tr.iterations;
  result.plan.marginal_violation = tr.violation;
  result.scaling = {tr.u.back(), tr.v.back(), tr.log_domain};
  if (!keep_links) result.scaling = {result.scaling.u.detached(), result.scaling.v.detached(), tr.log_domain};
  return result;
}

inline Tensor outer(const Tensor& x, const Tensor& y) {
  return ops::mul(ops::broadcast_cols(x, y.size()), ops::broadcast_rows(y, x.size()));
}

}  // namespace detail

/// Entropic transport plan between `marg.a` and `marg.b` under `cost`.
///
/// Each iteration rescales columns to `b` and then rows to `a`, so a single
/// iteration from a cold start reproduces softmax-over-rows followed by row
/// normalization. At least one iteration always runs; afterwards the loop stops
/// once the largest marginal violation is within `cfg.tolerance` or after
/// `cfg.max_iterations` iterations. When `cost` or the marginals are
/// tape-linked every iteration is recorded, so the plan is differentiable
/// through the unrolled solve. Returned scaling vectors are plain values.
inline SinkhornResult sinkhorn(const Tensor& cost, const Marginals& marg, const SinkhornConfig& cfg = {},
                               const std::optional<ScalingVectors>& warm = std::nullopt) {
  return detail::to_result(detail::run_sinkhorn(cost, marg, cfg, warm, false), false);
}

/// Returns P̄ ⊙ P for a loss L(P), given the plan P. Working with this product
/// avoids forming P̄ where P has underflowed to zero.
using WeightedCotangent = std::function<Tensor(const Tensor& plan)>;

struct SinkhornVjp {
  Tensor cost_grad;
  SinkhornResult result;
};

/// Gradient of L(sinkhorn(C)) with respect to C by an explicit reverse sweep
/// over the unrolled iterations. The sweep is itself written in tape ops: when
/// the inputs are tape-linked the returned gradient is differentiable, which is
/// what unrolled (non straight-through) cost descent needs. The returned
/// scaling vectors keep their tape links so that chained warm starts stay
/// differentiable.
inline SinkhornVjp sinkhorn_vjp(const Tensor& cost, const Marginals& marg, const SinkhornConfig& cfg,
                                const std::optional<ScalingVectors>& warm, const WeightedCotangent& weighted) {
  using namespace ops;
  auto tr = otslot::detail::run_sinkhorn(cost, marg, cfg, warm, true);
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  const std::size_t N = tr.iterations;
  const Tensor& K = tr.kernel;
  const Tensor W = weighted(tr.plan);
  if (W.shape() != tr.plan.shape()) throw ShapeError("sinkhorn_vjp: cotangent shape differs from the plan");

  Tensor grad;  // gradient with respect to the scaled kernel input
  if (tr.log_domain) {
    // P = exp(f ⊕ g − C/τ)
    Tensor cs_bar = neg(W);
    Tensor f_bar = sum(W, 1);
    Tensor g_bar = sum(W, 0);
    for (std::size_t k = N; k >= 1; --k) {
      const Tensor& f_prev = tr.u[k - 1];
      const Tensor& g_k = tr.v[k];
      const Tensor& lc = tr.s[k - 1];
      const Tensor& lr = tr.w[k - 1];
      // f_k = log a − LSE_j(g_k − C/τ)
      Tensor R = exp(sub(sub(broadcast_rows(g_k, m), K), broadcast_cols(lr, n)));
      Tensor lr_bar = neg(f_bar);
      g_bar = add(g_bar, matvec_transposed(R, lr_bar));
      cs_bar = sub(cs_bar, mul(broadcast_cols(lr_bar, n), R));
      // g_k = log b − LSE_i(f_{k−1} − C/τ)
      Tensor S = exp(sub(sub(broadcast_cols(f_prev, n), K), broadcast_rows(lc, m)));
      Tensor lc_bar = neg(g_bar);
      f_bar = matvec(S, lc_bar);
      cs_bar = sub(cs_bar, mul(S, broadcast_rows(lc_bar, m)));
      g_bar = Tensor::zeros({n});
    }
    grad = scale(cs_bar, 1.0 / tr.temperature);
  } else {
    // P = diag(u_N) K diag(v_N); the P-term of C̄ is −W/τ.
    const Tensor& uN = tr.u[N];
    const Tensor& vN = tr.v[N];
    Tensor u_bar = div(sum(W, 1), uN);
    Tensor v_bar_plan = div(sum(W, 0), vN);
    std::optional<Tensor> k_bar;
    auto accumulate = [&](const Tensor& term) { k_bar = k_bar ? add(*k_bar, term) : term; };
    for (std::size_t k = N; k >= 1; --k) {
      const Tensor& u_k = tr.u[k];
      const Tensor& v_k = tr.v[k];
      const Tensor& u_prev = tr.u[k - 1];
      const Tensor& s_k = tr.s[k - 1];
      const Tensor& w_k = tr.w[k - 1];
      // u_k = a / w_k, w_k = K v_k
      Tensor w_bar = neg(div(mul(u_bar, u_k), w_k));
      Tensor v_bar = matvec_transposed(K, w_bar);
      if (k == N) v_bar = add(v_bar, v_bar_plan);
      accumulate(otslot::detail::outer(w_bar, v_k));
      // v_k = b / s_k, s_k = Kᵀ u_{k−1}
      Tensor s_bar = neg(div(mul(v_bar, v_k), s_k));
      accumulate(otslot::detail::outer(u_prev, s_bar));
      u_bar = matvec(K, s_bar);
    }
    grad = neg(W);
    if (k_bar) grad = sub(grad, mul(K, *k_bar));
    grad = scale(grad, 1.0 / tr.temperature);
  }
  return {grad, otslot::detail::to_result(tr, true)};
}

}  // namespace otslot
