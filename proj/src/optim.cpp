#include "coss/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "coss/error.hpp"

namespace coss::nn {

void SgdConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError(fmt::format("learning_rate must be positive, got {}", learning_rate));
  }
  if (!(momentum >= 0 && momentum < 1)) {
    throw ConfigError(fmt::format("momentum must be in [0,1), got {}", momentum));
  }
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) {
    throw ConfigError(fmt::format("weight_decay must be non-negative, got {}", weight_decay));
  }
}

void sgd_step(std::span<Parameter* const> params, const SgdConfig& cfg) {
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor::zeros_like(p->value);
    if (p->momentum.shape() != p->value.shape()) p->momentum = Tensor::zeros_like(p->value);
    auto value = p->value.data();
    auto grad = p->grad.data();
    auto buf = p->momentum.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const Real g = grad[i] + cfg.weight_decay * value[i];
      buf[i] = cfg.momentum * buf[i] + g;
      value[i] -= cfg.learning_rate * buf[i];
      grad[i] = Real(0);
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor::zeros_like(p->value);
    p->zero_grad();
  }
}

void reset_momentum(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->momentum = Tensor::zeros_like(p->value);
}

} // namespace coss::nn
