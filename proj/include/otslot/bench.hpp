#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "otslot/error.hpp"
#include "otslot/hungarian.hpp"
#include "otslot/layers.hpp"
#include "otslot/ops.hpp"
#include "otslot/random.hpp"
#include "otslot/slot_attention.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

struct TrainConfig {
  std::size_t dataset_size = 64000;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t objects = 5;      // k
  std::size_t distractors = 100;  // h, all-zero rows
  std::size_t dim = 32;         // c
  std::size_t eval_size = 6400;
  /// Held-out samples scored after each epoch; the final score always uses
  /// `eval_size`. Zero means `eval_size`.
  std::size_t epoch_eval_size = 0;

  void validate() const {
    if (batch_size < 1 || objects < 1 || dim < 1 || eval_size < 1) {
      throw ConfigError("batch_size, objects, dim and eval_size must be positive");
    }
    if (epochs > 0 && dataset_size < batch_size) throw ConfigError("dataset_size must hold at least one batch");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  }
};

struct RandomObjectsSample {
  /// (k + h) × c, object rows and zero rows in shuffled order.
  Tensor inputs;
  /// k × c.
  Tensor targets;
  double sigma = 0.0;
};

/// Sample streams never overlap between the training and held-out sets.
inline constexpr std::uint64_t kHeldOutStream = 1ULL << 40;

inline RandomObjectsSample random_objects_sample(double sigma, const TrainConfig& cfg, std::uint64_t index) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
  Rng rng = substream(cfg.seed, index);
  const std::size_t k = cfg.objects;
  const std::size_t c = cfg.dim;
  const std::size_t n = k + cfg.distractors;
  RandomObjectsSample s;
  s.sigma = sigma;
  s.targets = gaussian({k, c}, sigma, rng);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> x(n * c, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (order[r] >= k) continue;
    for (std::size_t j = 0; j < c; ++j) x[r * c + j] = s.targets(order[r], j);
  }
  s.inputs = Tensor::matrix(n, c, std::move(x));
  return s;
}

inline std::vector<RandomObjectsSample> generate_dataset(double sigma, const TrainConfig& cfg, std::size_t count,
                                                         std::uint64_t first_index = 0) {
  std::vector<RandomObjectsSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_objects_sample(sigma, cfg, first_index + i));
  return out;
}

struct MatchedLoss {
  Tensor loss;
  /// Prediction row matched to each target.
  std::vector<std::size_t> matching;
};

/// Mean squared error between targets and their matched predictions,
/// minimized over injective target → prediction matchings.
inline MatchedLoss hungarian_mse_loss(const Tensor& pred, const Tensor& targets) {
  pred.require_rank(2);
  targets.require_rank(2);
  const std::size_t m = pred.rows();
  const std::size_t k = targets.rows();
  const std::size_t c = pred.cols();
  if (targets.cols() != c) throw ShapeError("hungarian_mse_loss: prediction and target widths differ");
  if (m < k) {
    throw ShapeError("hungarian_mse_loss: " + std::to_string(m) + " predictions for " + std::to_string(k) + " targets");
  }
  std::vector<double> pair(k * m);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = pred(i, j) - targets(t, j);
        s += d * d;
      }
      pair[t * m + i] = s / static_cast<double>(c);
    }
  }
  MatchedLoss out;
  out.matching = hungarian(Tensor::matrix(k, m, std::move(pair))).columns;
  Tensor diff = ops::sub(ops::gather_rows(pred, out.matching), targets.detached());
  out.loss = ops::mean(ops::square(diff));
  return out;
}

/// Adaptive-moment estimation with bias correction.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Parameters& params, const std::map<std::string, Tensor>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, value] : params.entries()) {
      auto g = grads.find(name);
      if (g == grads.end()) continue;
      Moments& mom = moments_[name];
      if (mom.first.empty()) {
        mom.first.assign(value.size(), 0.0);
        mom.second.assign(value.size(), 0.0);
      }
      std::vector<double> next = value.to_vector();
      for (std::size_t i = 0; i < next.size(); ++i) {
        const double gi = g->second[i];
        mom.first[i] = beta1_ * mom.first[i] + (1.0 - beta1_) * gi;
        mom.second[i] = beta2_ * mom.second[i] + (1.0 - beta2_) * gi * gi;
        next[i] -= lr_ * (mom.first[i] / c1) / (std::sqrt(mom.second[i] / c2) + eps_);
      }
      params.set(name, Tensor(value.shape(), std::move(next)));
    }
  }

  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Predicted objects for one input set.
/// One slot per object, object-width inputs and outputs, and 20 Sinkhorn
/// iterations per transport solve.
inline SAConfig benchmark_model(Variant variant, const TrainConfig& cfg) {
  SAConfig sa;
  sa.variant = variant;
  sa.num_slots = cfg.objects;
  sa.input_dim = sa.output_dim = cfg.dim;
  sa.sinkhorn.max_iterations = 20;
  return sa;
}

inline Tensor predict(const Parameters& params, const SAConfig& cfg, const Tensor& inputs, Rng& rng) {
  return readout(params, forward(inputs, params, cfg, rng).slots);
}

/// Maps a held-out sample and its index to predictions (m × c, m ≥ k).
using Predictor = std::function<Tensor(const RandomObjectsSample&, std::uint64_t index)>;

/// RMSE of matched predictions over `count` held-out samples, divided by σ.
inline double normalized_rmse(const Predictor& predictor, double sigma, const TrainConfig& cfg, std::size_t count) {
  if (count < 1) throw ConfigError("evaluation needs at least one sample");
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t index = kHeldOutStream + i;
    RandomObjectsSample s = random_objects_sample(sigma, cfg, index);
    Tensor pred = predictor(s, index);
    total += hungarian_mse_loss(pred.detached(), s.targets).loss.item();
  }
  return std::sqrt(total / static_cast<double>(count)) / sigma;
}

inline double evaluate_normalized_rmse(const Parameters& params, const SAConfig& sa, double sigma,
                                       const TrainConfig& cfg, std::size_t count = 0) {
  const Parameters frozen = params.detached();
  return normalized_rmse(
      [&](const RandomObjectsSample& s, std::uint64_t index) {
        Rng rng = substream(cfg.seed + 1, index);
        return predict(frozen, sa, s.inputs, rng);
      },
      sigma, cfg, count == 0 ? cfg.eval_size : count);
}

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  /// Mean training loss over the epoch; NaN for the initial row.
  double loss = 0.0;
  double eval_rmse_normalized = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Parameters params;
  std::vector<TrainLogRow> log;
  /// Per step batch losses.
  std::vector<double> step_losses;
  double final_rmse_normalized = 0.0;
  bool diverged = false;
  std::string divergence;
};

/// Called after each logged row, e.g. to stream the CSV.
using TrainObserver = std::function<void(const TrainLogRow&)>;

/// Hungarian-matched training on freshly indexed random-objects samples.
/// A non-finite batch loss or gradient stops training and returns the
/// parameters from before that step with `diverged` set.
inline TrainResult train(const SAConfig& sa, double sigma, const TrainConfig& cfg,
                         const TrainObserver& observer = {}) {
  sa.validate();
  cfg.validate();
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (cfg.objects > sa.num_slots) throw ConfigError("more objects than slots");
  if (sa.input_dim != cfg.dim || sa.output_dim != cfg.dim) throw ConfigError("slot attention and data dimensions differ");

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  const std::size_t epoch_eval = cfg.epoch_eval_size == 0 ? cfg.eval_size : cfg.epoch_eval_size;

  TrainResult result;
  Rng init = substream(cfg.seed + 2, 0);
  result.params = init_params(sa, init);
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

  auto emit = [&](TrainLogRow row) {
    result.log.push_back(row);
    if (observer) observer(row);
  };
  if (cfg.epochs > 0) {
    emit({0, 0, std::nan(""), evaluate_normalized_rmse(result.params, sa, sigma, cfg, epoch_eval), elapsed()});
  }

  const std::size_t steps_per_epoch = cfg.dataset_size / cfg.batch_size;
  std::vector<std::size_t> order(steps_per_epoch * cfg.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !result.diverged; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = substream(cfg.seed + 3, epoch);
    std::shuffle(order.begin(), order.end(), shuffle);
    double epoch_loss = 0.0;
    std::size_t done = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      Tape tape;
      Parameters linked = result.params.on_tape(tape);
      Tensor total = Tensor::scalar(0.0);
      std::string failure;
      try {
        for (std::size_t s = 0; s < cfg.batch_size; ++s) {
          const std::size_t index = order[b * cfg.batch_size + s];
          RandomObjectsSample sample = random_objects_sample(sigma, cfg, index);
          Rng rng = substream(cfg.seed + 4, step * cfg.batch_size + s);
          Tensor pred = predict(linked, sa, sample.inputs, rng);
          total = ops::add(total, hungarian_mse_loss(pred, sample.targets).loss);
        }
      } catch (const NumericalError& e) {
        failure = e.what();
      } catch (const DomainError& e) {
        failure = e.what();
      }
      Tensor loss = ops::scale(total, 1.0 / static_cast<double>(cfg.batch_size));
      const double value = failure.empty() ? loss.item() : std::nan("");
      std::map<std::string, Tensor> grads;
      bool finite = std::isfinite(value);
      if (finite) {
        GradientMap g = tape.backward(loss);
        for (const auto& [name, t] : linked.entries()) {
          if (!g.contains(t)) continue;
          grads[name] = g[t];
          finite = finite && grads[name].all_finite();
        }
      }
      if (!finite) {
        result.diverged = true;
        result.divergence = "non-finite loss or gradient at step " + std::to_string(step + 1);
        if (!failure.empty()) result.divergence += " (" + failure + ")";
        break;
      }
      adam.step(result.params, grads);
      result.step_losses.push_back(value);
      epoch_loss += value;
      ++done;
      ++step;
    }
    if (result.diverged) break;
    emit({epoch, step, epoch_loss / static_cast<double>(done),
          evaluate_normalized_rmse(result.params, sa, sigma, cfg, epoch_eval), elapsed()});
  }
  if (result.diverged) {
    result.final_rmse_normalized = std::nan("");
  } else if (!result.log.empty() && epoch_eval == cfg.eval_size) {
    result.final_rmse_normalized = result.log.back().eval_rmse_normalized;
  } else {
    result.final_rmse_normalized = evaluate_normalized_rmse(result.params, sa, sigma, cfg);
  }
  return result;
}

}  // namespace otslot
