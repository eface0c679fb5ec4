#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "otslot/error.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

struct Assignment {
  /// columns[i] is the column matched to row i.
  std::vector<std::size_t> columns;
  double cost = 0.0;
};

/// Minimum-cost injective assignment of the m rows of `cost` to its n ≥ m
/// columns, by the shortest augmenting path method with dual potentials,
/// O(m²n). Ties resolve to the lowest column index.
inline Assignment hungarian(const Tensor& cost) {
  cost.require_rank(2);
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  if (m > n) {
    throw ShapeError("hungarian: more rows than columns (" + std::to_string(m) + " > " + std::to_string(n) + ")");
  }
  if (!cost.all_finite()) throw NumericalError("hungarian: cost matrix has non-finite entries");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  // 1-based rows and columns; column 0 is the virtual source.
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= m; ++row) {
    owner[0] = row;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = kNone;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (reduced < minv[j]) {
          minv[j] = reduced;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment result;
  result.columns.assign(m, kNone);
  for (std::size_t j = 1; j <= n; ++j) {
    if (owner[j] != 0) result.columns[owner[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < m; ++i) result.cost += cost(i, result.columns[i]);
  return result;
}

}  // namespace otslot
