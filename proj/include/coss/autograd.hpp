#pragma once

// Reverse-mode differentiation over the small op set the model needs.
//
// A Var is a handle to a node in a dynamically recorded graph. Ops allocate
// their output eagerly and capture whatever their backward pass needs. Leaves
// bound to a Parameter accumulate into Parameter::grad when backward() runs.
// A graph can be differentiated once; build a new one for the next step.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coss/tensor.hpp"

namespace coss::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor momentum;

  Parameter() = default;
  Parameter(std::string name, Tensor value);

  void zero_grad() { grad.fill(Real(0)); }
  std::size_t size() const noexcept { return value.size(); }
};

enum class BnMode { training, inference };

struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  Real epsilon = Real(1e-5);
  Real momentum = Real(0.1);
  BnMode mode = BnMode::training;

  BatchNorm() = default;
  BatchNorm(const std::string& prefix, std::size_t channels);
  std::size_t channels() const noexcept { return running_mean.size(); }
};

namespace detail {
struct Node;
struct Access;
}

class Var {
public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient after backward(); a zero tensor if nothing flowed here.
  Tensor grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool defined() const noexcept { return node_ != nullptr; }

private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Access;
};

/// Input with no gradient; takes ownership of the data.
Var constant(Tensor value);
/// Input with no gradient that aliases `value`, which must outlive the graph.
Var constant_ref(const Tensor& value);
/// Differentiable leaf aliasing `p.value`; backward() accumulates into `p.grad`.
Var parameter(Parameter& p);

/// Valid 1-D convolution, stride 1: out[b,o,t] = bias[o] + sum_{c,k} x[b,c,t+k] w[o,c,k].
Var conv1d(const Var& x, const Var& weight, const Var& bias);
Var relu(const Var& x);
/// Per-channel batch norm over [batch, channels, length]. Uses and updates
/// running statistics according to bn.mode.
Var batch_norm(const Var& x, BatchNorm& bn);
/// Inference-mode batch norm that never touches `bn`.
Var batch_norm_inference(const Var& x, const BatchNorm& bn);
/// Maximum over the temporal axis: [batch, channels, length] -> [batch, channels].
Var global_max_pool(const Var& x);
/// y = x W^T + b with x [batch, in], W [out, in], b [out].
Var dense(const Var& x, const Var& weight, const Var& bias);
/// Softmax of a 1-D vector, max-subtracted.
Var softmax(const Var& x);
/// Selects entries of a 1-D vector.
Var gather(const Var& x, std::span<const std::size_t> indices);
/// sum_j weights[j] * features[j]; features share one shape, weights is 1-D.
Var weighted_sum(std::span<const Var> features, const Var& weights);
/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(const Var& logits, std::span<const int> labels);
Var sum(const Var& x);
/// sum(x * r) for a fixed tensor r; used to build scalar probes in tests.
Var dot(const Var& x, const Tensor& r);

/// Populates gradients of every Parameter reachable from the scalar `loss`.
/// Throws StateError when called a second time on the same graph.
void backward(const Var& loss);

/// Row-wise softmax of a [batch, classes] tensor, without graph tracking.
Tensor softmax_rows(const Tensor& logits);

} // namespace coss::nn
