#pragma once

#include <cstdint>
#include <random>

#include "otslot/tensor.hpp"

namespace otslot {

/// Every stochastic routine takes its stream explicitly; nothing is global.
using Rng = std::mt19937_64;

inline Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  std::vector<double> data(shape_size(shape));
  if (stddev > 0.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : data) x = dist(rng);
  }
  return Tensor(std::move(shape), std::move(data));
}

/// Independent stream for item `index` of a run seeded with `seed`.
inline Rng substream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace otslot
