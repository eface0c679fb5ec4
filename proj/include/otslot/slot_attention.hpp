#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "otslot/costs.hpp"
#include "otslot/emd.hpp"
#include "otslot/error.hpp"
#include "otslot/layers.hpp"
#include "otslot/mesh.hpp"
#include "otslot/ops.hpp"
#include "otslot/random.hpp"
#include "otslot/sinkhorn.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

enum class Variant { kSA, kSASinkhorn, kSAEmd, kSAMesh };

inline Variant parse_variant(const std::string& name) {
  if (name == "sa") return Variant::kSA;
  if (name == "sa-sh") return Variant::kSASinkhorn;
  if (name == "sa-emd") return Variant::kSAEmd;
  if (name == "sa-mesh") return Variant::kSAMesh;
  throw ConfigError("unknown variant '" + name + "' (expected sa, sa-sh, sa-emd or sa-mesh)");
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSA: return "sa";
    case Variant::kSASinkhorn: return "sa-sh";
    case Variant::kSAEmd: return "sa-emd";
    case Variant::kSAMesh: return "sa-mesh";
  }
  return "?";
}

struct SAConfig {
  std::size_t num_slots = 5;
  std::size_t iterations = 3;
  Variant variant = Variant::kSA;
  Metric metric = Metric::kL2;
  /// Divide logits (or costs) by √d_k. Unset: on for kSA, off otherwise.
  std::optional<bool> scale_by_sqrt_dk;
  /// Only the last iteration is differentiated; earlier ones run on values.
  bool implicit_diff = true;
  /// Marginals from the scorer heads; otherwise a = 1, b = m/n.
  bool learned_marginals = true;
  /// All initial slots equal the learned mean.
  bool identical_init = false;
  bool residual_mlp = false;
  bool layer_norm_inputs = true;
  bool layer_norm_slots = true;
  /// Linear map from slots to object space applied by `readout`.
  bool readout = true;

  std::size_t input_dim = 32;  // c
  std::size_t slot_dim = 32;   // d
  std::size_t key_dim = 32;    // d_k
  std::size_t value_dim = 32;  // d_v
  std::size_t head_width = 32;
  std::size_t output_dim = 32;

  SinkhornConfig sinkhorn{1.0, 100, 1e-6, SinkhornDomain::kAuto};
  /// Descent settings for kSAMesh; its final solve uses `sinkhorn`.
  MeshConfig mesh{};

  bool scaled() const { return scale_by_sqrt_dk.value_or(variant == Variant::kSA); }

  void validate() const {
    if (num_slots < 1) throw ConfigError("num_slots must be at least 1");
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (input_dim < 1 || slot_dim < 1 || key_dim < 1 || value_dim < 1 || head_width < 1 || output_dim < 1) {
      throw ConfigError("slot attention dimensions must be positive");
    }
    if (!readout && output_dim != slot_dim) throw ConfigError("without a readout output_dim must equal slot_dim");
    sinkhorn.validate();
    if (variant == Variant::kSAMesh) mesh_config().validate(num_slots);
  }

  MeshConfig mesh_config() const {
    MeshConfig cfg = mesh;
    cfg.sinkhorn = sinkhorn;
    return cfg;
  }
};

/// Per iteration values of the attention matrix and its marginals.
struct AttentionTrace {
  std::vector<Tensor> attention;
  std::vector<Marginals> marginals;
};

inline Parameters init_params(const SAConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t c = cfg.input_dim;
  const std::size_t d = cfg.slot_dim;
  Parameters p;
  p.set("w_q", init_uniform({d, cfg.key_dim}, d, rng));
  p.set("w_k", init_uniform({c, cfg.key_dim}, c, rng));
  p.set("w_v", init_uniform({c, cfg.value_dim}, c, rng));
  add_gru(p, "gru", cfg.value_dim, d, rng);
  add_mlp(p, "marg_a", d, cfg.head_width, 1, rng);
  add_mlp(p, "marg_b", c, cfg.head_width, 1, rng);
  p.set("slots.mu", gaussian({d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  p.set("slots.log_sigma", Tensor::full({d}, std::log(1.0 / std::sqrt(static_cast<double>(d)))));
  if (cfg.layer_norm_inputs) add_layer_norm(p, "ln_inputs", c);
  if (cfg.layer_norm_slots) add_layer_norm(p, "ln_slots", d);
  if (cfg.residual_mlp) {
    add_layer_norm(p, "ln_mlp", d);
    add_mlp(p, "mlp", d, cfg.head_width, d, rng);
  }
  if (cfg.readout) {
    p.set("readout.w", Tensor::zeros({d, cfg.output_dim}));
    p.set("readout.b", Tensor::zeros({cfg.output_dim}));
  }
  return p;
}

/// Z⁽⁰⁾ = μ + exp(log σ) ⊙ ε per slot, or m copies of μ.
inline Tensor init_slots(const Parameters& params, std::size_t m, Rng& rng, bool identical = false) {
  const Tensor& mu = params["slots.mu"];
  Tensor base = ops::broadcast_rows(mu, m);
  if (identical) return base;
  Tensor eps = gaussian({m, mu.size()}, 1.0, rng);
  return ops::add(base, ops::mul(ops::broadcast_rows(ops::exp(params["slots.log_sigma"]), m), eps));
}

/// Softmax over slots for each input, then each slot's row rescaled to sum 1.
inline Tensor baseline_attention(const Tensor& q, const Tensor& k, bool scale_by_sqrt_dk) {
  q.require_rank(2);
  k.require_rank(2);
  if (q.cols() != k.cols()) throw ShapeError("baseline_attention: query and key widths differ");
  Tensor logits = ops::matmul(q, ops::transpose(k));
  if (scale_by_sqrt_dk) logits = ops::scale(logits, 1.0 / std::sqrt(static_cast<double>(q.cols())));
  Tensor attn = ops::softmax(logits, 0);
  Tensor rows = ops::sum(attn, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i] > 0.0)) throw NumericalError("baseline_attention: slot " + std::to_string(i) + " receives no attention");
  }
  return ops::div(attn, ops::broadcast_cols(rows, attn.cols()));
}

inline Tensor scorer_softmax(const Parameters& params, const std::string& head, const Tensor& x, double mass) {
  Tensor scores = ops::reshape(apply_mlp(params, head, x), {x.rows()});
  return ops::scale(ops::softmax(scores, 0), mass);
}

/// a = m·softmax(h_a(Z)), b = m·softmax(h_b(X)).
inline Marginals learned_marginals(const Tensor& slots, const Tensor& inputs, const Parameters& params) {
  slots.require_rank(2);
  inputs.require_rank(2);
  const double m = static_cast<double>(slots.rows());
  return {scorer_softmax(params, "marg_a", slots, m), scorer_softmax(params, "marg_b", inputs, m)};
}

/// Draws the MESH tiebreaking noise for iteration `l`.
using MeshNoise = std::function<Tensor(std::size_t iteration, const Shape& shape)>;

namespace detail {

/// Quantities that depend on the inputs only.
struct InputFeatures {
  Tensor normed;
  Tensor keys;
  Tensor values;
};

inline InputFeatures input_features(const Tensor& x, const Parameters& params, const SAConfig& cfg) {
  x.require_rank(2);
  if (x.cols() != cfg.input_dim) {
    throw ShapeError("inputs have " + std::to_string(x.cols()) + " columns, expected " + std::to_string(cfg.input_dim));
  }
  if (!x.all_finite()) throw NumericalError("inputs have non-finite entries");
  InputFeatures f;
  f.normed = cfg.layer_norm_inputs ? apply_layer_norm(params, "ln_inputs", x) : x;
  f.keys = ops::matmul(f.normed, params["w_k"]);
  f.values = ops::matmul(f.normed, params["w_v"]);
  return f;
}

struct Iteration {
  Tensor slots;
  Tensor attention;
  Marginals marginals;
};

inline Iteration iterate(const Tensor& z, const InputFeatures& f, const Parameters& params, const SAConfig& cfg,
                         Rng& rng, const MeshNoise& noise, std::size_t index) {
  z.require_rank(2);
  if (z.cols() != cfg.slot_dim) throw ShapeError("slots have " + std::to_string(z.cols()) + " columns");
  const std::size_t m = z.rows();
  const std::size_t n = f.keys.rows();
  Tensor zn = cfg.layer_norm_slots ? apply_layer_norm(params, "ln_slots", z) : z;
  Tensor q = ops::matmul(zn, params["w_q"]);

  Iteration it;
  if (cfg.variant == Variant::kSA) {
    it.attention = baseline_attention(q, f.keys, cfg.scaled());
    it.marginals = {Tensor::ones({m}), ops::sum(it.attention, 0).detached()};
  } else {
    Tensor cost = distance_costs(q, f.keys, cfg.metric);
    if (cfg.scaled()) cost = ops::scale(cost, 1.0 / std::sqrt(static_cast<double>(cfg.key_dim)));
    Marginals marg = cfg.learned_marginals ? learned_marginals(zn, f.normed, params) : Marginals::uniform(m, n);
    switch (cfg.variant) {
      case Variant::kSASinkhorn:
        it.attention = sinkhorn(cost, marg, cfg.sinkhorn).plan.values;
        break;
      case Variant::kSAEmd:
        it.attention = emd_with_sinkhorn_surrogate(cost, marg, cfg.sinkhorn).values;
        break;
      case Variant::kSAMesh: {
        const MeshConfig mc = cfg.mesh_config();
        Tensor eps = noise ? noise(index, cost.shape()) : gaussian(cost.shape(), mc.noise_std, rng);
        it.attention = mesh(cost, marg, mc, eps).plan.values;
        break;
      }
      case Variant::kSA: break;
    }
    it.marginals = marg.detached();
  }

  Tensor updates = ops::matmul(it.attention, f.values);
  Tensor next = gru(params, "gru", z, updates);
  if (cfg.residual_mlp) next = ops::add(next, apply_mlp(params, "mlp", apply_layer_norm(params, "ln_mlp", next)));
  it.slots = next;
  return it;
}

}  // namespace detail

/// One attention-and-update step: returns Z⁽ˡ⁺¹⁾ and A⁽ˡ⁾.
inline std::pair<Tensor, Tensor> sa_iteration(const Tensor& z, const Tensor& x, const Parameters& params,
                                              const SAConfig& cfg, Rng& rng) {
  cfg.validate();
  detail::Iteration it = detail::iterate(z, detail::input_features(x, params, cfg), params, cfg, rng, {}, 0);
  return {it.slots, it.attention};
}

struct ForwardResult {
  Tensor slots;
  AttentionTrace trace;
};

/// Runs `cfg.iterations` steps from the given initial slots. With
/// `implicit_diff` only the last step is recorded on the tape, starting
/// from the detached slots of the step before.
inline ForwardResult forward_from(const Tensor& x, const Tensor& initial, const Parameters& params,
                                  const SAConfig& cfg, Rng& rng, const MeshNoise& noise = {}) {
  cfg.validate();
  if (initial.rank() != 2 || initial.rows() != cfg.num_slots) {
    throw ShapeError("initial slots must have " + std::to_string(cfg.num_slots) + " rows");
  }
  const Parameters frozen = cfg.implicit_diff ? params.detached() : params;
  const detail::InputFeatures linked = detail::input_features(x, params, cfg);
  const detail::InputFeatures detached{linked.normed.detached(), linked.keys.detached(), linked.values.detached()};

  ForwardResult out;
  Tensor z = cfg.implicit_diff && cfg.iterations > 1 ? initial.detached() : initial;
  for (std::size_t l = 0; l < cfg.iterations; ++l) {
    const bool taped = !cfg.implicit_diff || l + 1 == cfg.iterations;
    detail::Iteration it = detail::iterate(z, taped ? linked : detached, taped ? params : frozen, cfg, rng, noise, l);
    out.trace.attention.push_back(it.attention.detached());
    out.trace.marginals.push_back(it.marginals);
    z = it.slots;
  }
  out.slots = z;
  return out;
}

inline ForwardResult forward(const Tensor& x, const Parameters& params, const SAConfig& cfg, Rng& rng,
                             const MeshNoise& noise = {}) {
  cfg.validate();
  Tensor initial = init_slots(params, cfg.num_slots, rng, cfg.identical_init);
  return forward_from(x, initial, params, cfg, rng, noise);
}

/// Maps final slots to predicted objects.
inline Tensor readout(const Parameters& params, const Tensor& slots) {
  if (!params.contains("readout.w")) return slots;
  return apply_linear(params, "readout", slots);
}

}  // namespace otslot
