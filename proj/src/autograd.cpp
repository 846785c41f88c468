#include "coss/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "coss/error.hpp"
#include "coss/kernels.hpp"

namespace coss::nn {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)),
      momentum(Tensor::zeros_like(value)) {}

BatchNorm::BatchNorm(const std::string& prefix, std::size_t channels)
    : gamma(prefix + ".gamma", Tensor({channels}, Real(1))),
      beta(prefix + ".beta", Tensor({channels}, Real(0))), running_mean(channels, Real(0)),
      running_var(channels, Real(1)) {}

namespace detail {

struct Node {
  Tensor owned;
  const Tensor* ref = nullptr;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool consumed = false;
  Parameter* param = nullptr;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  const Tensor& value() const { return ref ? *ref : owned; }

  Tensor& grad_buffer() {
    if (!has_grad) {
      grad = Tensor(value().shape());
      has_grad = true;
    }
    return grad;
  }

  void accumulate(std::span<const Real> g) {
    auto& buf = grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }
};

struct Access {
  static const std::shared_ptr<Node>& node(const Var& v) { return v.node_; }
  static Var wrap(std::shared_ptr<Node> n) { return Var(std::move(n)); }
};

} // namespace detail

using detail::Access;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

const NodePtr& node_of(const Var& v, const char* op) {
  const auto& n = Access::node(v);
  if (!n) throw StateError(fmt::format("{}: undefined input", op));
  return n;
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(fmt::format("{}: non-finite value in output", op));
}

Var make_result(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backward,
                const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->owned = std::move(value);
  n->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr& in) { return in->requires_grad; });
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Access::wrap(std::move(n));
}

} // namespace

const Tensor& Var::value() const { return node_of(*this, "value")->value(); }

Tensor Var::grad() const {
  const auto& n = node_of(*this, "grad");
  return n->has_grad ? n->grad : Tensor(n->value().shape());
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->owned = std::move(value);
  return Access::wrap(std::move(n));
}

Var constant_ref(const Tensor& value) {
  auto n = std::make_shared<Node>();
  n->ref = &value;
  return Access::wrap(std::move(n));
}

Var parameter(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->ref = &p.value;
  n->param = &p;
  n->requires_grad = true;
  return Access::wrap(std::move(n));
}

Var conv1d(const Var& x, const Var& weight, const Var& bias) {
  const auto& xn = node_of(x, "conv1d");
  const auto& wn = node_of(weight, "conv1d");
  const auto& bn = node_of(bias, "conv1d");
  const Tensor& xv = xn->value();
  const Tensor& wv = wn->value();
  expect_rank(xv, 3, "conv1d input");
  expect_rank(wv, 3, "conv1d weight");
  kernels::ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0), wv.dim(2)};
  if (wv.dim(1) != d.in_channels) {
    throw ShapeError(fmt::format("conv1d: weight {} does not match input {}",
                                 shape_string(wv.shape()), shape_string(xv.shape())));
  }
  expect_shape(bn->value(), {d.out_channels}, "conv1d bias");
  if (d.kernel == 0 || d.length < d.kernel) {
    throw ShapeError(fmt::format("conv1d: kernel {} longer than input length {}", d.kernel, d.length));
  }
  Tensor out({d.batch, d.out_channels, d.out_length()});
  kernels::conv1d_forward(d, xv.data(), wv.data(), bn->value().data(), out.data());
  return make_result(std::move(out), {xn, wn, bn}, [d](Node& self) {
    auto& xi = *self.inputs[0];
    auto& wi = *self.inputs[1];
    auto& bi = *self.inputs[2];
    if (xi.requires_grad) {
      std::vector<Real> gi(d.input_size());
      kernels::conv1d_backward_input(d, self.grad.data(), wi.value().data(), gi);
      xi.accumulate(gi);
    }
    if (wi.requires_grad || bi.requires_grad) {
      std::vector<Real> gw(d.weight_size()), gb(d.out_channels);
      kernels::conv1d_backward_params(d, self.grad.data(), xi.value().data(), gw, gb);
      if (wi.requires_grad) wi.accumulate(gw);
      if (bi.requires_grad) bi.accumulate(gb);
    }
  }, "conv1d");
}

Var relu(const Var& x) {
  const auto& xn = node_of(x, "relu");
  Tensor out = xn->value();
  for (auto& v : out.data()) v = v > Real(0) ? v : Real(0);
  return make_result(std::move(out), {xn}, [](Node& self) {
    auto& xi = *self.inputs[0];
    const Tensor& xv = xi.value();
    auto& g = xi.grad_buffer();
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > Real(0)) g[i] += self.grad[i];
  }, "relu");
}

namespace {

Var batch_norm_impl(const Var& x, const Var& gamma, const Var& beta, const BatchNorm& cfg,
                    BatchNorm* update) {
  const auto& xn = node_of(x, "batch_norm");
  const Tensor& xv = xn->value();
  expect_rank(xv, 3, "batch_norm input");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
  if (ch != cfg.channels()) {
    throw ShapeError(fmt::format("batch_norm: {} channels, state has {}", ch, cfg.channels()));
  }
  const bool training = update != nullptr;
  if (training && batch < 2) {
    throw NumericError("batch_norm: training mode needs a batch of at least 2");
  }
  const std::size_t n = batch * len;
  const Tensor& g = Access::node(gamma)->value();
  const Tensor& bt = Access::node(beta)->value();

  std::vector<Real> mean(ch), inv_std(ch);
  if (training) {
    std::vector<Real> sum(ch, 0), sq(ch, 0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const Real* row = xv.ptr() + (b * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) sum[c] += row[t];
      }
    for (std::size_t c = 0; c < ch; ++c) mean[c] = sum[c] / Real(n);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const Real* row = xv.ptr() + (b * ch + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          const Real dlt = row[t] - mean[c];
          sq[c] += dlt * dlt;
        }
      }
    for (std::size_t c = 0; c < ch; ++c) {
      const Real v = sq[c] / Real(n);
      inv_std[c] = Real(1) / std::sqrt(v + cfg.epsilon);
      const Real unbiased = v * Real(n) / Real(n - 1);
      update->running_mean[c] = (Real(1) - cfg.momentum) * update->running_mean[c] + cfg.momentum * mean[c];
      update->running_var[c] = (Real(1) - cfg.momentum) * update->running_var[c] + cfg.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = cfg.running_mean[c];
      inv_std[c] = Real(1) / std::sqrt(cfg.running_var[c] + cfg.epsilon);
    }
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * len;
      const Real* row = xv.ptr() + off;
      Real* h = xhat.ptr() + off;
      Real* y = out.ptr() + off;
      for (std::size_t t = 0; t < len; ++t) {
        h[t] = (row[t] - mean[c]) * inv_std[c];
        y[t] = g[c] * h[t] + bt[c];
      }
    }

  return make_result(
      std::move(out), {xn, Access::node(gamma), Access::node(beta)},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), training, batch, ch, len](Node& self) {
        auto& xi = *self.inputs[0];
        auto& gi = *self.inputs[1];
        auto& bi = *self.inputs[2];
        const Tensor& gam = gi.value();
        const Tensor& dy = self.grad;
        const Real n = Real(batch * len);
        std::vector<Real> sum_dy(ch, 0), sum_dy_xhat(ch, 0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t off = (b * ch + c) * len;
            for (std::size_t t = 0; t < len; ++t) {
              sum_dy[c] += dy[off + t];
              sum_dy_xhat[c] += dy[off + t] * xhat[off + t];
            }
          }
        if (gi.requires_grad) gi.accumulate(sum_dy_xhat);
        if (bi.requires_grad) bi.accumulate(sum_dy);
        if (!xi.requires_grad) return;
        auto& gx = xi.grad_buffer();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const Real scale = gam[c] * inv_std[c];
            for (std::size_t t = 0; t < len; ++t) {
              const std::size_t i = (b * ch + c) * len + t;
              if (training) {
                gx[i] += scale / n * (n * dy[i] - sum_dy[c] - xhat[i] * sum_dy_xhat[c]);
              } else {
                gx[i] += scale * dy[i];
              }
            }
          }
      },
      "batch_norm");
}

} // namespace

Var batch_norm(const Var& x, BatchNorm& bn) {
  return batch_norm_impl(x, parameter(bn.gamma), parameter(bn.beta), bn,
                         bn.mode == BnMode::training ? &bn : nullptr);
}

Var batch_norm_inference(const Var& x, const BatchNorm& bn) {
  return batch_norm_impl(x, constant_ref(bn.gamma.value), constant_ref(bn.beta.value), bn, nullptr);
}

Var global_max_pool(const Var& x) {
  const auto& xn = node_of(x, "global_max_pool");
  const Tensor& xv = xn->value();
  expect_rank(xv, 3, "global_max_pool input");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
  if (len == 0) throw ShapeError("global_max_pool: empty temporal axis");
  Tensor out({batch, ch});
  std::vector<std::size_t> argmax(batch * ch);
  for (std::size_t r = 0; r < batch * ch; ++r) {
    const Real* row = xv.ptr() + r * len;
    const std::size_t k = std::size_t(std::max_element(row, row + len) - row);
    argmax[r] = r * len + k;
    out[r] = row[k];
  }
  return make_result(std::move(out), {xn}, [argmax = std::move(argmax)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < argmax.size(); ++r) g[argmax[r]] += self.grad[r];
  }, "global_max_pool");
}

Var dense(const Var& x, const Var& weight, const Var& bias) {
  const auto& xn = node_of(x, "dense");
  const auto& wn = node_of(weight, "dense");
  const auto& bn = node_of(bias, "dense");
  const Tensor& xv = xn->value();
  const Tensor& wv = wn->value();
  expect_rank(xv, 2, "dense input");
  expect_rank(wv, 2, "dense weight");
  kernels::DenseDims d{xv.dim(0), xv.dim(1), wv.dim(0)};
  if (wv.dim(1) != d.in_features) {
    throw ShapeError(fmt::format("dense: weight {} does not match input {}",
                                 shape_string(wv.shape()), shape_string(xv.shape())));
  }
  expect_shape(bn->value(), {d.out_features}, "dense bias");
  Tensor out({d.batch, d.out_features});
  kernels::dense_forward(d, xv.data(), wv.data(), bn->value().data(), out.data());
  return make_result(std::move(out), {xn, wn, bn}, [d](Node& self) {
    auto& xi = *self.inputs[0];
    auto& wi = *self.inputs[1];
    auto& bi = *self.inputs[2];
    if (xi.requires_grad) {
      std::vector<Real> gx(d.batch * d.in_features);
      kernels::dense_backward_input(d, self.grad.data(), wi.value().data(), gx);
      xi.accumulate(gx);
    }
    if (wi.requires_grad || bi.requires_grad) {
      std::vector<Real> gw(d.out_features * d.in_features), gb(d.out_features);
      kernels::dense_backward_params(d, self.grad.data(), xi.value().data(), gw, gb);
      if (wi.requires_grad) wi.accumulate(gw);
      if (bi.requires_grad) bi.accumulate(gb);
    }
  }, "dense");
}

Var softmax(const Var& x) {
  const auto& xn = node_of(x, "softmax");
  const Tensor& xv = xn->value();
  expect_rank(xv, 1, "softmax input");
  if (xv.size() == 0) throw ShapeError("softmax: empty input");
  Tensor out(xv.shape());
  const Real mx = *std::max_element(xv.data().begin(), xv.data().end());
  Real z = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) z += (out[i] = std::exp(xv[i] - mx));
  for (auto& v : out.data()) v /= z;
  return make_result(std::move(out), {xn}, [](Node& self) {
    auto& xi = *self.inputs[0];
    const Tensor& y = self.value();
    Real s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += self.grad[i] * y[i];
    auto& g = xi.grad_buffer();
    for (std::size_t i = 0; i < y.size(); ++i) g[i] += y[i] * (self.grad[i] - s);
  }, "softmax");
}

Var gather(const Var& x, std::span<const std::size_t> indices) {
  const auto& xn = node_of(x, "gather");
  const Tensor& xv = xn->value();
  expect_rank(xv, 1, "gather input");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= xv.size()) throw ShapeError(fmt::format("gather: index {} out of range", idx[i]));
    out[i] = xv[idx[i]];
  }
  return make_result(std::move(out), {xn}, [idx = std::move(idx)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  }, "gather");
}

Var weighted_sum(std::span<const Var> features, const Var& weights) {
  if (features.empty()) throw StateError("weighted_sum: no features");
  const auto& wn = node_of(weights, "weighted_sum");
  const Tensor& wv = wn->value();
  expect_shape(wv, {features.size()}, "weighted_sum weights");
  std::vector<NodePtr> inputs{wn};
  const Shape& shape = node_of(features[0], "weighted_sum")->value().shape();
  Tensor out(shape);
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto& fn = node_of(features[j], "weighted_sum");
    expect_shape(fn->value(), shape, "weighted_sum feature");
    const Tensor& fv = fn->value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wv[j] * fv[i];
    inputs.push_back(fn);
  }
  return make_result(std::move(out), std::move(inputs), [](Node& self) {
    auto& wi = *self.inputs[0];
    const Tensor& wv = wi.value();
    for (std::size_t j = 0; j + 1 < self.inputs.size(); ++j) {
      auto& fi = *self.inputs[j + 1];
      const Tensor& fv = fi.value();
      if (wi.requires_grad) {
        Real s = 0;
        for (std::size_t i = 0; i < fv.size(); ++i) s += self.grad[i] * fv[i];
        wi.grad_buffer()[j] += s;
      }
      if (fi.requires_grad) {
        auto& g = fi.grad_buffer();
        for (std::size_t i = 0; i < fv.size(); ++i) g[i] += wv[j] * self.grad[i];
      }
    }
  }, "weighted_sum");
}

Tensor softmax_rows(const Tensor& logits) {
  expect_rank(logits, 2, "softmax_rows input");
  Tensor out(logits.shape());
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* z = logits.ptr() + r * cols;
    Real* p = out.ptr() + r * cols;
    const Real mx = *std::max_element(z, z + cols);
    Real s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += (p[c] = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) p[c] /= s;
  }
  return out;
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const auto& ln = node_of(logits, "cross_entropy");
  const Tensor& z = ln->value();
  expect_rank(z, 2, "cross_entropy logits");
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  if (classes < 2) throw InputError("cross_entropy: need at least 2 classes");
  if (labels.size() != batch) {
    throw ShapeError(fmt::format("cross_entropy: {} labels for batch of {}", labels.size(), batch));
  }
  for (int y : labels) {
    if (y < 0 || std::size_t(y) >= classes) {
      throw InputError(fmt::format("cross_entropy: label {} outside [0,{})", y, classes));
    }
  }
  Real loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* row = z.ptr() + b * classes;
    const Real mx = *std::max_element(row, row + classes);
    Real s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - mx);
    loss += mx + std::log(s) - row[labels[b]];
  }
  loss /= Real(batch);
  std::vector<int> y(labels.begin(), labels.end());
  return make_result(Tensor(Shape{}, {loss}), {ln}, [y = std::move(y)](Node& self) {
    auto& li = *self.inputs[0];
    Tensor p = softmax_rows(li.value());
    const std::size_t batch = p.dim(0), classes = p.dim(1);
    const Real scale = self.grad[0] / Real(batch);
    auto& g = li.grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < classes; ++c) {
        const Real target = std::size_t(y[b]) == c ? Real(1) : Real(0);
        g[b * classes + c] += scale * (p.at(b, c) - target);
      }
  }, "cross_entropy");
}

Var sum(const Var& x) {
  const auto& xn = node_of(x, "sum");
  Real s = 0;
  for (Real v : xn->value().data()) s += v;
  return make_result(Tensor(Shape{}, {s}), {xn}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g.data()) v += self.grad[0];
  }, "sum");
}

Var dot(const Var& x, const Tensor& r) {
  const auto& xn = node_of(x, "dot");
  expect_shape(r, xn->value().shape(), "dot probe");
  Real s = 0;
  const Tensor& xv = xn->value();
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * r[i];
  return make_result(Tensor(Shape{}, {s}), {xn}, [r](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r.size(); ++i) g[i] += self.grad[0] * r[i];
  }, "dot");
}

void backward(const Var& loss) {
  const auto& root = node_of(loss, "backward");
  if (root->value().size() != 1) {
    throw ShapeError(fmt::format("backward: loss must be scalar, got {}",
                                 shape_string(root->value().shape())));
  }
  if (root->consumed) throw StateError("backward: graph was already differentiated");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->consumed = true;
    if (!n->has_grad) continue;
    if (n->backward) n->backward(*n);
    if (n->param) {
      auto& pg = n->param->grad;
      if (pg.shape() != n->grad.shape()) pg = Tensor(n->grad.shape());
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n->grad[i];
    }
  }
}

} // namespace coss::nn
