#pragma once

#include <cmath>
#include <string>

#include "otslot/error.hpp"
#include "otslot/ops.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

enum class Metric { kNegDot, kL2, kCosine };

inline Metric parse_metric(const std::string& name) {
  if (name == "neg_dot") return Metric::kNegDot;
  if (name == "l2") return Metric::kL2;
  if (name == "cosine") return Metric::kCosine;
  throw ConfigError("unknown metric '" + name + "' (expected neg_dot, l2 or cosine)");
}

inline std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::kNegDot: return "neg_dot";
    case Metric::kL2: return "l2";
    case Metric::kCosine: return "cosine";
  }
  return "unknown";
}

namespace detail {

inline Tensor unit_rows(const Tensor& x, const char* which) {
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += x(i, k) * x(i, k);
    if (norm == 0.0) throw DomainError(std::string("cosine distance: zero-norm row in ") + which, i * d);
  }
  Tensor norms = ops::sqrt(ops::sum(ops::square(x), 1));
  return ops::div(x, ops::broadcast_cols(norms, d));
}

}  // namespace detail

/// Pairwise costs C_ij = d(q_i, k_j) between the rows of `q` (m×d) and `k` (n×d).
///   neg_dot: −q·k
///   l2:      ½‖q − k‖², which differs from neg_dot only by per-row and
///            per-column offsets, so both give the same Sinkhorn plan
///   cosine:  1 − cos(q, k)
inline Tensor distance_costs(const Tensor& q, const Tensor& k, Metric metric) {
  q.require_rank(2);
  k.require_rank(2);
  if (q.cols() != k.cols()) {
    throw ShapeError("distance_costs: feature dims differ, " + shape_string(q.shape()) + " vs " +
                     shape_string(k.shape()));
  }
  const std::size_t m = q.rows();
  const std::size_t n = k.rows();
  switch (metric) {
    case Metric::kNegDot:
      return ops::neg(ops::matmul(q, ops::transpose(k)));
    case Metric::kL2: {
      Tensor qq = ops::broadcast_cols(ops::sum(ops::square(q), 1), n);
      Tensor kk = ops::broadcast_rows(ops::sum(ops::square(k), 1), m);
      return ops::sub(ops::scale(ops::add(qq, kk), 0.5), ops::matmul(q, ops::transpose(k)));
    }
    case Metric::kCosine: {
      Tensor sim = ops::matmul(detail::unit_rows(q, "queries"), ops::transpose(detail::unit_rows(k, "keys")));
      return ops::sub(Tensor::scalar(1.0), sim);
    }
  }
  throw ConfigError("unknown metric");
}

}  // namespace otslot
