#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "otslot/entropy.hpp"
#include "otslot/error.hpp"
#include "otslot/ops.hpp"
#include "otslot/random.hpp"
#include "otslot/sinkhorn.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

/// Penalty α‖SᵀP − P₀‖² keeping the descended plan close to the plan P₀ of
/// the original cost, up to moving mass among slots that S marks as similar.
struct SimilarityTerm {
  double alpha = 0.0;
  /// m×m, each column sums to 1.
  Tensor similarity;
};

struct MeshConfig {
  std::size_t steps = 4;
  double learning_rate = 1.0;
  /// Standard deviation of the Gaussian tiebreaking noise added to the cost.
  double noise_std = 1e-3;
  /// Sinkhorn iterations per descent step.
  std::size_t inner_iterations = 5;
  /// Reuse scaling vectors between descent steps and for the final solve.
  bool warm_start = true;
  /// Temperature, domain and stopping rule of the final solve; the inner
  /// solves share its temperature and domain.
  SinkhornConfig sinkhorn{};
  /// Pass gradients from the descended cost to the input cost as identity.
  bool straight_through = true;
  std::optional<SimilarityTerm> similarity;

  SinkhornConfig inner() const {
    SinkhornConfig cfg = sinkhorn;
    cfg.max_iterations = inner_iterations;
    cfg.tolerance = 0.0;
    return cfg;
  }

  void validate(std::size_t rows) const {
    if (steps < 1) throw ConfigError("mesh steps must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("mesh learning rate must be positive");
    if (!(noise_std >= 0.0)) throw ConfigError("mesh noise_std must be nonnegative");
    if (inner_iterations < 1) throw ConfigError("mesh inner_iterations must be at least 1");
    sinkhorn.validate();
    if (similarity) {
      if (!(similarity->alpha >= 0.0)) throw ConfigError("similarity alpha must be nonnegative");
      const Tensor& s = similarity->similarity;
      if (s.rank() != 2 || s.rows() != rows || s.cols() != rows) {
        throw ShapeError("similarity matrix must be " + std::to_string(rows) + "x" + std::to_string(rows));
      }
      for (std::size_t j = 0; j < rows; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < rows; ++i) total += s(i, j);
        if (std::abs(total - 1.0) > 1e-9) {
          throw ConfigError("similarity column " + std::to_string(j) + " sums to " + std::to_string(total));
        }
      }
    }
  }
};

struct MeshTrace {
  /// Per descent step t = 0..T−1, all values only.
  std::vector<double> entropies;
  std::vector<double> gradient_norms;
  std::vector<bool> skipped;
  std::vector<Tensor> costs;  // C'⁽ᵗ⁾
  std::vector<Tensor> plans;  // inner plan of C'⁽ᵗ⁾
  std::vector<ScalingVectors> scalings;
  Tensor final_cost;  // C'⁽ᵀ⁾
  /// Start point of the final solve, if any.
  std::optional<ScalingVectors> final_warm;
};

struct MeshResult {
  /// C'⁽ᵀ⁾, tape-linked to the input cost when that is linked.
  Tensor cost;
  TransportPlan plan;
  MeshTrace trace;
};

/// α‖SᵀP − P₀‖².
inline Tensor similarity_penalty(const Tensor& plan, const Tensor& reference, const Tensor& similarity, double alpha) {
  return ops::scale(ops::sum(ops::square(ops::sub(ops::matmul(ops::transpose(similarity), plan), reference))), alpha);
}

namespace detail {

inline WeightedCotangent mesh_objective(const MeshConfig& cfg, const std::optional<Tensor>& reference) {
  if (!cfg.similarity || cfg.similarity->alpha == 0.0) return entropy_weighted_cotangent;
  const double alpha = cfg.similarity->alpha;
  const Tensor s = cfg.similarity->similarity.detached();
  const Tensor p0 = *reference;
  return [alpha, s, p0](const Tensor& plan) {
    // ∂/∂P α‖SᵀP − P₀‖² = 2α S (SᵀP − P₀)
    Tensor residual = ops::sub(ops::matmul(ops::transpose(s), plan), p0);
    Tensor penalty = ops::scale(ops::matmul(s, residual), 2.0 * alpha);
    return ops::add(entropy_weighted_cotangent(plan), ops::mul(penalty, plan));
  };
}

}  // namespace detail

/// Minimizes the entropy of the Sinkhorn plan over a perturbed copy of the
/// cost, then solves Sinkhorn on the result.
///
/// C'⁽⁰⁾ = C + noise, then T steps C' ← C' − λ·g/‖g‖_F where g is the gradient
/// of the objective at the warm-started inner plan. Steps with ‖g‖_F < 1e-12
/// are skipped. With `straight_through` set the returned plan differentiates
/// with respect to C as if C'⁽ᵀ⁾ were C; otherwise the descent itself is
/// differentiated.
inline MeshResult mesh(const Tensor& cost, const Marginals& marg, const MeshConfig& cfg, const Tensor& noise) {
  cost.require_rank(2);
  cfg.validate(cost.rows());
  if (noise.shape() != cost.shape()) throw ShapeError("mesh: noise shape differs from cost");
  if (!cost.all_finite()) throw NumericalError("mesh: cost matrix has non-finite entries");
  const bool unroll = !cfg.straight_through;
  const Marginals inner_marg = unroll ? marg : marg.detached();
  const SinkhornConfig inner = cfg.inner();

  std::optional<Tensor> reference;
  if (cfg.similarity && cfg.similarity->alpha != 0.0) {
    reference = sinkhorn(cost.detached(), marg.detached(), cfg.sinkhorn).plan.values;
  }
  const WeightedCotangent objective = detail::mesh_objective(cfg, reference);

  Tensor current = unroll ? ops::add(cost, noise.detached()) : ops::add(cost.detached(), noise.detached());
  std::optional<ScalingVectors> warm;
  MeshResult result;
  MeshTrace& trace = result.trace;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    SinkhornVjp step = sinkhorn_vjp(current, inner_marg, inner, warm, objective);
    const Tensor& g = step.cost_grad;
    double norm_sq = 0.0;
    for (double x : g.values()) norm_sq += x * x;
    const double norm = std::sqrt(norm_sq);
    if (!std::isfinite(norm)) {
      throw NumericalError("mesh: non-finite entropy gradient at step " + std::to_string(t) +
                           " (temperature " + std::to_string(cfg.sinkhorn.temperature) + ")");
    }
    trace.entropies.push_back(entropy(step.result.plan.values.detached()).item());
    trace.gradient_norms.push_back(norm);
    trace.skipped.push_back(norm < 1e-12);
    trace.costs.push_back(current.detached());
    trace.plans.push_back(step.result.plan.values.detached());
    trace.scalings.push_back({step.result.scaling.u.detached(), step.result.scaling.v.detached(),
                              step.result.scaling.log_domain});
    if (norm >= 1e-12) {
      Tensor direction = unroll ? ops::div(g, ops::frobenius_norm(g)) : ops::scale(g, 1.0 / norm);
      current = ops::sub(current, ops::scale(direction, cfg.learning_rate));
    }
    if (cfg.warm_start) warm = step.result.scaling;
  }
  if (!current.all_finite()) throw NumericalError("mesh: descended cost is not finite");

  trace.final_cost = current.detached();
  if (warm) trace.final_warm = ScalingVectors{warm->u.detached(), warm->v.detached(), warm->log_domain};
  result.cost = cfg.straight_through ? ops::straight_through(current, cost) : current;
  result.plan = sinkhorn(result.cost, marg, cfg.sinkhorn, warm).plan;
  return result;
}

inline MeshResult mesh(const Tensor& cost, const Marginals& marg, const MeshConfig& cfg, Rng& rng) {
  cost.require_rank(2);
  return mesh(cost, marg, cfg, gaussian(cost.shape(), cfg.noise_std, rng));
}

/// MESH on the objective H(P) + α‖SᵀP − P₀‖², P₀ = sinkhorn(C) held constant.
inline MeshResult mesh_similarity(const Tensor& cost, const Marginals& marg, const MeshConfig& cfg, Rng& rng) {
  if (!cfg.similarity) throw ConfigError("mesh_similarity requires a similarity term");
  return mesh(cost, marg, cfg, rng);
}

struct StraightThroughReport {
  double max_deviation = 0.0;
  bool passed = false;
};

using PlanLoss = std::function<Tensor(const Tensor& plan)>;

/// Compares the gradient of loss(mesh(C).plan) with respect to C against the
/// gradient of loss(sinkhorn(C'⁽ᵀ⁾)) with respect to C'⁽ᵀ⁾. Straight-through
/// backprop makes the two identical.
inline StraightThroughReport straight_through_gradient_check(const Tensor& cost, const Marginals& marg,
                                                             const MeshConfig& cfg, const PlanLoss& loss,
                                                             Rng& rng, double tolerance = 1e-12) {
  if (!cfg.straight_through) throw ConfigError("straight_through_gradient_check requires straight_through");
  Tape through;
  Tensor c = through.variable(cost);
  MeshResult out = mesh(c, marg.detached(), cfg, rng);
  Tensor via_mesh = through.backward(loss(out.plan.values))[c];

  Tape direct;
  Tensor c_final = direct.variable(out.trace.final_cost);
  Tensor plan = sinkhorn(c_final, marg.detached(), cfg.sinkhorn, out.trace.final_warm).plan.values;
  Tensor via_sinkhorn = direct.backward(loss(plan))[c_final];

  StraightThroughReport report;
  for (std::size_t k = 0; k < via_mesh.size(); ++k) {
    report.max_deviation = std::max(report.max_deviation, std::abs(via_mesh[k] - via_sinkhorn[k]));
  }
  report.passed = report.max_deviation <= tolerance;
  return report;
}

}  // namespace otslot
