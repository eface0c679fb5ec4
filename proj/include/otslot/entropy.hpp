#pragma once

#include <cmath>
#include <string>

#include "otslot/error.hpp"
#include "otslot/ops.hpp"
#include "otslot/sinkhorn.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

/// H(P) = −Σ P_ij log P_ij with 0·log 0 = 0. Differentiable.
inline Tensor entropy(const Tensor& plan) { return ops::neg(ops::sum(ops::xlogx(plan))); }
inline Tensor entropy(const TransportPlan& plan) { return entropy(plan.values); }

/// H(P) / (m·log n). Only defined for unit row marginals, where a permutation
/// plan scores 0 and the uniform plan scores 1.
inline Tensor normalized_entropy(const Tensor& plan, const Marginals& marg) {
  plan.require_rank(2);
  for (std::size_t i = 0; i < marg.a.size(); ++i) {
    if (marg.a[i] != 1.0) {
      throw MarginalError("normalized_entropy requires unit row marginals (a[" + std::to_string(i) +
                          "] = " + std::to_string(marg.a[i]) + ")");
    }
  }
  if (marg.rows() != plan.rows() || marg.cols() != plan.cols()) throw ShapeError("normalized_entropy: marginals do not match plan");
  if (plan.cols() < 2) throw ShapeError("normalized_entropy needs at least two columns");
  const double max_entropy = static_cast<double>(plan.rows()) * std::log(static_cast<double>(plan.cols()));
  return ops::scale(entropy(plan), 1.0 / max_entropy);
}

inline Tensor normalized_entropy(const TransportPlan& plan, const Marginals& marg) {
  return normalized_entropy(plan.values, marg);
}

/// P̄ ⊙ P for the entropy loss, the seed `sinkhorn_vjp` expects.
inline Tensor entropy_weighted_cotangent(const Tensor& plan) {
  return ops::neg(ops::add(ops::xlogx(plan), plan));
}

}  // namespace otslot
