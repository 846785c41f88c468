#pragma once

#include <span>

#include "coss/autograd.hpp"

namespace coss::nn {

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
struct SgdConfig {
  Real learning_rate = Real(1e-2);
  Real momentum = Real(0.9);
  Real weight_decay = Real(1e-4);

  void validate() const;
};

/// g = grad + weight_decay * value; buf = momentum * buf + g; value -= lr * buf.
/// Gradients are zeroed afterwards.
void sgd_step(std::span<Parameter* const> params, const SgdConfig& cfg);

void zero_grads(std::span<Parameter* const> params);
void reset_momentum(std::span<Parameter* const> params);

} // namespace coss::nn
