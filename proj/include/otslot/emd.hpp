#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "otslot/error.hpp"
#include "otslot/ops.hpp"
#include "otslot/sinkhorn.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

namespace detail {

/// Tree path from row node `row` to column node `col` through basic cells,
/// returned as the visited cells in order. Rows are nodes 0..m−1, columns m..m+n−1.
inline std::vector<std::size_t> basis_path(const std::vector<char>& basic, std::size_t m, std::size_t n,
                                           std::size_t row, std::size_t col) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> parent_cell(m + n, kNone);
  std::vector<char> seen(m + n, 0);
  std::deque<std::size_t> queue{row};
  seen[row] = 1;
  const std::size_t target = m + col;
  while (!queue.empty() && !seen[target]) {
    const std::size_t node = queue.front();
    queue.pop_front();
    if (node < m) {
      for (std::size_t j = 0; j < n; ++j) {
        if (basic[node * n + j] && !seen[m + j]) {
          seen[m + j] = 1;
          parent_cell[m + j] = node * n + j;
          queue.push_back(m + j);
        }
      }
    } else {
      const std::size_t j = node - m;
      for (std::size_t i = 0; i < m; ++i) {
        if (basic[i * n + j] && !seen[i]) {
          seen[i] = 1;
          parent_cell[i] = i * n + j;
          queue.push_back(i);
        }
      }
    }
  }
  if (!seen[target]) throw NumericalError("emd: basis is not a spanning tree");
  std::vector<std::size_t> cells;
  std::size_t node = target;
  while (node != row) {
    const std::size_t cell = parent_cell[node];
    cells.push_back(cell);
    node = node >= m ? cell / n : m + cell % n;
  }
  std::reverse(cells.begin(), cells.end());
  return cells;
}

}  // namespace detail

/// Exact (unregularized) optimal transport by the transportation simplex.
///
/// Starts from the northwest-corner basis and pivots with Bland's rule, entering
/// the lowest-index cell of negative reduced cost and leaving the lowest-index
/// cell among the ratio-test ties. The result is a basic solution with at most
/// m + n − 1 nonzeros. Marginal masses that agree within the Marginals
/// tolerance are reconciled by rescaling `b`. The plan is not differentiable.
inline TransportPlan emd_exact(const Tensor& cost, const Marginals& marg) {
  cost.require_rank(2);
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  if (marg.rows() != m || marg.cols() != n) throw ShapeError("emd: cost does not match marginals");
  if (!cost.all_finite()) throw NumericalError("emd: cost matrix has non-finite entries");
  marg.validate();
  std::vector<double> a = marg.a.to_vector();
  std::vector<double> b = marg.b.to_vector();
  double sa = 0.0;
  double sb = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (a[i] <= 0.0) throw MarginalError("emd: zero-mass row marginal at " + std::to_string(i));
    sa += a[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (b[j] <= 0.0) throw MarginalError("emd: zero-mass column marginal at " + std::to_string(j));
    sb += b[j];
  }
  for (double& x : b) x *= sa / sb;

  double cmax = 0.0;
  for (double c : cost.values()) cmax = std::max(cmax, std::abs(c));
  const double eps = 1e-12 * std::max(cmax, 1.0);

  // Northwest-corner start; degenerate zero basics keep the basis a spanning tree.
  std::vector<double> x(m * n, 0.0);
  std::vector<char> basic(m * n, 0);
  {
    std::vector<double> ra = a;
    std::vector<double> rb = b;
    std::size_t i = 0;
    std::size_t j = 0;
    while (true) {
      const double q = std::min(ra[i], rb[j]);
      x[i * n + j] = q;
      basic[i * n + j] = 1;
      ra[i] -= q;
      rb[j] -= q;
      if (i == m - 1 && j == n - 1) break;
      if (i < m - 1 && (j == n - 1 || ra[i] <= rb[j])) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  std::vector<double> u(m), v(n);
  std::size_t pivots = 0;
  const std::size_t max_pivots = 100 * (m + n) * (m + n) + 1000;
  while (true) {
    // Dual potentials with u_0 = 0 along the basis tree.
    std::vector<char> row_set(m, 0), col_set(n, 0);
    u[0] = 0.0;
    row_set[0] = 1;
    std::deque<std::size_t> queue{0};
    while (!queue.empty()) {
      const std::size_t node = queue.front();
      queue.pop_front();
      if (node < m) {
        for (std::size_t j = 0; j < n; ++j) {
          if (basic[node * n + j] && !col_set[j]) {
            v[j] = cost(node, j) - u[node];
            col_set[j] = 1;
            queue.push_back(m + j);
          }
        }
      } else {
        const std::size_t j = node - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (basic[i * n + j] && !row_set[i]) {
            u[i] = cost(i, j) - v[j];
            row_set[i] = 1;
            queue.push_back(i);
          }
        }
      }
    }

    std::size_t entering = m * n;
    for (std::size_t cell = 0; cell < m * n && entering == m * n; ++cell) {
      if (basic[cell]) continue;
      const std::size_t i = cell / n;
      const std::size_t j = cell % n;
      if (cost(i, j) - u[i] - v[j] < -eps) entering = cell;
    }
    if (entering == m * n) break;
    if (++pivots > max_pivots) throw NumericalError("emd: pivot limit exceeded");

    const std::size_t ei = entering / n;
    const std::size_t ej = entering % n;
    // Cells on the path alternate −, +, −, … starting from row ei.
    const auto path = detail::basis_path(basic, m, n, ei, ej);
    std::size_t leaving = m * n;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const std::size_t cell = path[k];
      if (x[cell] < theta || (x[cell] == theta && cell < leaving)) {
        theta = x[cell];
        leaving = cell;
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) x[path[k]] += (k % 2 == 0 ? -theta : theta);
    x[entering] = theta;
    basic[entering] = 1;
    basic[leaving] = 0;
    x[leaving] = 0.0;
  }

  for (double& value : x) value = std::max(value, 0.0);
  TransportPlan plan;
  plan.values = Tensor::matrix(m, n, std::move(x));
  plan.converged = true;
  plan.iterations = pivots;
  double violation = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += plan.values(i, j);
    violation = std::max(violation, std::abs(s - marg.a[i]));
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += plan.values(i, j);
    violation = std::max(violation, std::abs(s - marg.b[j]));
  }
  plan.marginal_violation = violation;
  return plan;
}

/// Total transport cost Σ C_ij P_ij.
inline double transport_cost(const Tensor& cost, const Tensor& plan) {
  double total = 0.0;
  for (std::size_t k = 0; k < cost.size(); ++k) total += cost[k] * plan[k];
  return total;
}

/// Exact plan plus Sinkhorn plan. The exact term is a constant of the backward
/// pass, so gradients are those of the Sinkhorn term alone.
inline TransportPlan emd_with_sinkhorn_surrogate(const Tensor& cost, const Marginals& marg,
                                                 const SinkhornConfig& cfg) {
  const TransportPlan exact = emd_exact(cost.detached(), marg.detached());
  SinkhornResult soft = sinkhorn(cost, marg, cfg);
  TransportPlan out = soft.plan;
  out.values = ops::add(exact.values, soft.plan.values);
  return out;
}

}  // namespace otslot
