#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "otslot/error.hpp"
#include "otslot/ops.hpp"
#include "otslot/random.hpp"
#include "otslot/tensor.hpp"

namespace otslot {

/// Named parameter tensors in a fixed (lexicographic) order.
class Parameters {
 public:
  void set(const std::string& name, Tensor value) { values_[name] = std::move(value); }

  const Tensor& operator[](const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  std::size_t size() const { return values_.size(); }
  const std::map<std::string, Tensor>& entries() const { return values_; }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : values_) total += t.size();
    return total;
  }

  /// Copy whose tensors are leaves of `tape`.
  Parameters on_tape(Tape& tape) const {
    Parameters out;
    for (const auto& [name, t] : values_) out.values_[name] = tape.variable(t);
    return out;
  }

  Parameters detached() const {
    Parameters out;
    for (const auto& [name, t] : values_) out.values_[name] = t.detached();
    return out;
  }

 private:
  std::map<std::string, Tensor> values_;
};

/// Uniform(−1/√fan_in, 1/√fan_in) initialization.
inline Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_size(shape));
  for (double& x : data) x = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

/// x·W + b with b broadcast over rows.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add(ops::matmul(x, w), ops::broadcast_rows(b, x.rows()));
}

inline void add_linear(Parameters& p, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  p.set(prefix + ".w", init_uniform({in, out}, in, rng));
  p.set(prefix + ".b", init_uniform({out}, in, rng));
}

inline Tensor apply_linear(const Parameters& p, const std::string& prefix, const Tensor& x) {
  return linear(x, p[prefix + ".w"], p[prefix + ".b"]);
}

/// Two-layer perceptron with a rectifier between the layers.
inline void add_mlp(Parameters& p, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
                    Rng& rng) {
  add_linear(p, prefix + ".l1", in, hidden, rng);
  add_linear(p, prefix + ".l2", hidden, out, rng);
}

inline Tensor apply_mlp(const Parameters& p, const std::string& prefix, const Tensor& x) {
  return apply_linear(p, prefix + ".l2", ops::relu(apply_linear(p, prefix + ".l1", x)));
}

/// Per-row layer normalization with learned gain and bias.
inline void add_layer_norm(Parameters& p, const std::string& prefix, std::size_t dim) {
  p.set(prefix + ".gamma", Tensor::ones({dim}));
  p.set(prefix + ".beta", Tensor::zeros({dim}));
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t rows = x.rows();
  const std::size_t d = x.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor centered = ops::sub(x, ops::broadcast_cols(ops::scale(ops::sum(x, 1), inv_d), d));
  Tensor var = ops::scale(ops::sum(ops::square(centered), 1), inv_d);
  Tensor normed = ops::div(centered, ops::broadcast_cols(ops::sqrt(ops::add_scalar(var, eps)), d));
  return ops::add(ops::mul(normed, ops::broadcast_rows(gamma, rows)), ops::broadcast_rows(beta, rows));
}

inline Tensor apply_layer_norm(const Parameters& p, const std::string& prefix, const Tensor& x) {
  return layer_norm(x, p[prefix + ".gamma"], p[prefix + ".beta"]);
}

/// Gated recurrent unit applied row-wise with hidden state h (rows × hidden):
///   r = σ(x W_ir + h W_hr + b_r)
///   z = σ(x W_iz + h W_hz + b_z)
///   n = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))
///   h' = (1 − z) ⊙ h + z ⊙ n
/// so an update gate of 0 keeps the state.
inline void add_gru(Parameters& p, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng) {
  for (const char* gate : {"r", "z", "n"}) {
    p.set(prefix + ".w_i" + gate, init_uniform({input, hidden}, hidden, rng));
    p.set(prefix + ".w_h" + gate, init_uniform({hidden, hidden}, hidden, rng));
  }
  p.set(prefix + ".b_r", init_uniform({hidden}, hidden, rng));
  p.set(prefix + ".b_z", init_uniform({hidden}, hidden, rng));
  p.set(prefix + ".b_in", init_uniform({hidden}, hidden, rng));
  p.set(prefix + ".b_hn", init_uniform({hidden}, hidden, rng));
}

inline Tensor gru(const Parameters& p, const std::string& prefix, const Tensor& h, const Tensor& x) {
  using namespace ops;
  const std::size_t rows = h.rows();
  auto bias = [&](const char* name) { return broadcast_rows(p[prefix + name], rows); };
  Tensor r = sigmoid(add(add(matmul(x, p[prefix + ".w_ir"]), matmul(h, p[prefix + ".w_hr"])), bias(".b_r")));
  Tensor z = sigmoid(add(add(matmul(x, p[prefix + ".w_iz"]), matmul(h, p[prefix + ".w_hz"])), bias(".b_z")));
  Tensor hn = add(matmul(h, p[prefix + ".w_hn"]), bias(".b_hn"));
  Tensor n = tanh(add(add(matmul(x, p[prefix + ".w_in"]), bias(".b_in")), mul(r, hn)));
  return add(h, mul(z, sub(n, h)));
}

}  // namespace otslot
