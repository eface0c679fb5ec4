#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "otslot/error.hpp"

namespace otslot {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

class Tape;

/// Dense row-major array of doubles. Storage is shared and immutable, so
/// copies are cheap and a tensor without a tape link is a plain value.
/// A tape-linked tensor additionally carries the identifier of the node that
/// produced it.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)),
        data_(std::make_shared<const std::vector<double>>(std::move(data))) {
    if (data_->size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  static Tensor full(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
      if (row.size() != n) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{m, n}, std::move(data));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    std::vector<double> data(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
    return Tensor(Shape{n, n}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_->size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  std::span<const double> data() const noexcept { return {data_->data(), data_->size()}; }
  const std::vector<double>& values() const noexcept { return *data_; }
  const std::shared_ptr<const std::vector<double>>& storage() const noexcept { return data_; }
  std::vector<double> to_vector() const { return *data_; }

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double operator()(std::size_t i, std::size_t j) const { return (*data_)[i * shape_[1] + j]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return (*data_)[0];
  }

  bool linked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

  /// Same values, no tape link. Shares storage.
  Tensor detached() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.id_ = 0;
    return out;
  }

  /// Same storage viewed under a different shape of equal size.
  Tensor reshaped_value(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor out = detached();
    out.shape_ = std::move(shape);
    return out;
  }

  bool all_finite() const {
    for (double x : *data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void require_rank(std::size_t r) const {
    if (rank() != r) {
      throw ShapeError("expected rank " + std::to_string(r) + ", got shape " +
                       shape_string(shape_));
    }
  }

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// View handed to a node's backward function: `input(k)` is the gradient
/// buffer of the node's k-th input, or an empty span when that input is not
/// tape-linked.
class GradSink {
 public:
  explicit GradSink(std::vector<std::span<double>> inputs) : inputs_(std::move(inputs)) {}
  std::span<double> input(std::size_t k) const { return inputs_[k]; }
  bool wants(std::size_t k) const { return !inputs_[k].empty(); }

 private:
  std::vector<std::span<double>> inputs_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSink& sink)>;

class GradientMap;

/// Linear record of a computation. Node identifiers are indices in recording
/// order, so inputs always precede their consumers. Single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf whose gradient is reported by `backward`.
  Tensor variable(const Tensor& value) {
    Tensor out = value.detached();
    nodes_.push_back(Node{{}, value.size(), nullptr, true});
    grads_.emplace_back();
    out.tape_ = this;
    out.id_ = nodes_.size() - 1;
    return out;
  }

  /// Links `out` to this tape as the result of an operation over `inputs`.
  Tensor record(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
    Node node;
    node.inputs.reserve(inputs.size());
    for (const Tensor* in : inputs) {
      if (in->tape_ != nullptr && in->tape_ != this) {
        throw TapeError("operation mixes tensors from different tapes");
      }
      node.inputs.push_back(in->tape_ ? in->id_ : kUnlinked);
    }
    node.size = out.size();
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    out.tape_ = this;
    out.id_ = nodes_.size() - 1;
    return out;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Clears all accumulated gradients. Recorded nodes are kept, so the same
  /// graph can be differentiated again.
  void zero_grad() {
    for (auto& g : grads_) {
      g.clear();
      g.shrink_to_fit();
    }
  }

  /// Gradient currently accumulated for `x`; zeros if none reached it.
  Tensor grad(const Tensor& x) const {
    if (x.tape_ != this || grads_[x.id_].empty()) return Tensor::zeros(x.shape());
    return Tensor(x.shape(), grads_[x.id_]);
  }

  GradientMap backward(const Tensor& seed, const std::optional<Tensor>& cotangent = std::nullopt);

 private:
  static constexpr std::size_t kUnlinked = std::numeric_limits<std::size_t>::max();

  struct Node {
    std::vector<std::size_t> inputs;
    std::size_t size = 0;
    BackwardFn backward;
    bool leaf = false;
  };

  std::vector<double>& buffer(std::size_t id) {
    auto& g = grads_[id];
    if (g.empty()) g.assign(nodes_[id].size, 0.0);
    return g;
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

/// Snapshot of the leaf gradients after a backward pass.
class GradientMap {
 public:
  GradientMap() = default;

  /// Gradient with respect to `x`. Tensors that are detached, unreached, or
  /// not leaves of the differentiated tape get zeros.
  Tensor operator[](const Tensor& x) const {
    if (!x.linked() || x.tape() != tape_) return Tensor::zeros(x.shape());
    auto it = grads_.find(x.id());
    if (it == grads_.end()) return Tensor::zeros(x.shape());
    return Tensor(x.shape(), it->second);
  }

  bool contains(const Tensor& x) const {
    return x.linked() && x.tape() == tape_ && grads_.count(x.id()) != 0;
  }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::unordered_map<std::size_t, std::vector<double>> grads_;
};

inline GradientMap Tape::backward(const Tensor& seed, const std::optional<Tensor>& cotangent) {
  if (seed.tape_ != this) throw TapeError("backward on a tensor that is not on this tape");
  std::vector<double>& seed_grad = buffer(seed.id_);
  if (cotangent) {
    if (cotangent->size() != seed.size()) {
      throw ShapeError("cotangent shape " + shape_string(cotangent->shape()) +
                       " does not match output " + shape_string(seed.shape()));
    }
    for (std::size_t i = 0; i < seed_grad.size(); ++i) seed_grad[i] += (*cotangent)[i];
  } else {
    if (seed.size() != 1) {
      throw TapeError("backward from a non-scalar output requires an explicit cotangent");
    }
    seed_grad[0] += 1.0;
  }

  for (std::size_t id = seed.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.leaf || !node.backward || grads_[id].empty()) continue;
    std::vector<std::span<double>> sinks;
    sinks.reserve(node.inputs.size());
    for (std::size_t in : node.inputs) {
      if (in == kUnlinked) {
        sinks.emplace_back();
      } else {
        auto& b = buffer(in);
        sinks.emplace_back(b.data(), b.size());
      }
    }
    node.backward(std::span<const double>(grads_[id]), GradSink(std::move(sinks)));
    // Intermediate buffers are no longer needed once propagated.
    grads_[id].clear();
    grads_[id].shrink_to_fit();
  }

  GradientMap result;
  result.tape_ = this;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].leaf && !grads_[id].empty()) result.grads_.emplace(id, grads_[id]);
  }
  return result;
}

/// Reverse-mode gradient of `seed` on its own tape.
inline GradientMap backward(const Tensor& seed,
                            const std::optional<Tensor>& cotangent = std::nullopt) {
  if (!seed.linked()) throw TapeError("backward on a tensor that is not on a tape");
  return seed.tape()->backward(seed, cotangent);
}

}  // namespace otslot
