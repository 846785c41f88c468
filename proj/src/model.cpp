#include "coss/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "coss/error.hpp"
#include "coss/random.hpp"

namespace coss {

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = Real(uniform(rng, -bound, bound));
  return t;
}

Conv1dLayer make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t ks,
                      std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(in * ks));
  Conv1dLayer layer;
  layer.weight = nn::Parameter(name + ".weight", uniform_tensor({out, in, ks}, bound, rng));
  layer.bias = nn::Parameter(name + ".bias", uniform_tensor({out}, bound, rng));
  return layer;
}

DenseLayer make_dense(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  DenseLayer layer;
  layer.weight = nn::Parameter(name + ".weight", uniform_tensor({out, in}, bound, rng));
  layer.bias = nn::Parameter(name + ".bias", uniform_tensor({out}, bound, rng));
  return layer;
}

std::vector<std::size_t> flagged(const std::vector<bool>& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

} // namespace

std::vector<double> GateLayer::weights(const std::vector<bool>& active) const {
  std::vector<double> w(alpha.value.size(), 0.0);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (active[i]) mx = std::max(mx, double(alpha.value[i]));
  double z = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (active[i]) z += (w[i] = std::exp(double(alpha.value[i]) - mx));
  for (auto& v : w) v /= z;
  return w;
}

std::vector<bool> SensorBlock::active_branches() const {
  std::vector<bool> mask(branches.size());
  for (std::size_t i = 0; i < branches.size(); ++i) mask[i] = branches[i].active;
  return mask;
}

std::vector<std::size_t> SensorBlock::active_indices() const { return flagged(active_branches()); }

std::size_t SensorBlock::branch_index(double rate) const {
  for (std::size_t i = 0; i < branches.size(); ++i)
    if (branches[i].rate() == rate) return i;
  throw InputError(fmt::format("sensor {} has no {} Hz rate candidate", config.id, format_rate(rate)));
}

std::string branch_label(const SensorBlock& sensor, const Branch& branch) {
  return fmt::format("{}@{}Hz", sensor.config.id, format_rate(branch.rate()));
}

CossModel::CossModel(ModelConfig cfg) : config_(std::move(cfg)) {
  config_.validate();
  const std::size_t f = config_.filters;
  for (const auto& sc : config_.sensors) {
    SensorBlock block;
    block.config = sc;
    for (double rate : sc.rate_candidates) {
      Branch br;
      br.geometry = branch_geometry(config_, sc, rate);
      const std::string prefix = fmt::format("{}@{}", sc.id, format_rate(rate));
      std::mt19937_64 rng(derive_seed(config_.seed, prefix));
      const std::size_t ks = br.geometry.kernel;
      br.encoder.conv1 = make_conv(prefix + ".conv1", sc.channels, f, ks, rng);
      br.encoder.bn1 = nn::BatchNorm(prefix + ".bn1", f);
      br.encoder.conv2 = make_conv(prefix + ".conv2", f, f, ks, rng);
      br.encoder.bn2 = nn::BatchNorm(prefix + ".bn2", f);
      br.encoder.conv3 = make_conv(prefix + ".conv3", f, f, ks, rng);
      block.branches.push_back(std::move(br));
    }
    block.rate_gate.alpha =
        nn::Parameter(sc.id + ".rate_gate.alpha", Tensor({sc.rate_candidates.size()}, Real(0)));
    sensors_.push_back(std::move(block));
  }
  sensor_gate_.alpha = nn::Parameter("sensor_gate.alpha", Tensor({sensors_.size()}, Real(0)));
  std::mt19937_64 rng(derive_seed(config_.seed, "classifier"));
  hidden_ = make_dense("classifier.hidden", f, config_.classifier_hidden, rng);
  output_ = make_dense("classifier.output", config_.classifier_hidden, config_.num_classes, rng);
}

CossModel build_model(const ModelConfig& cfg) { return CossModel(cfg); }

std::size_t CossModel::sensor_index(std::string_view id) const {
  for (std::size_t i = 0; i < sensors_.size(); ++i)
    if (sensors_[i].config.id == id) return i;
  throw InputError(fmt::format("unknown sensor '{}'", id));
}

SensorBlock& CossModel::sensor(std::string_view id) { return sensors_[sensor_index(id)]; }
const SensorBlock& CossModel::sensor(std::string_view id) const { return sensors_[sensor_index(id)]; }

std::vector<bool> CossModel::active_sensors() const {
  std::vector<bool> mask(sensors_.size());
  for (std::size_t i = 0; i < sensors_.size(); ++i) mask[i] = sensors_[i].active;
  return mask;
}

std::vector<std::size_t> CossModel::active_sensor_indices() const { return flagged(active_sensors()); }

void CossModel::set_mode(nn::BnMode mode) {
  mode_ = mode;
  for (auto* bn : batch_norms(false)) bn->mode = mode;
}

namespace {

template <class Model, class Param, class BN>
void collect(Model& m, bool active_only, std::vector<Param*>& params, std::vector<BN*>& bns) {
  for (auto& s : m.sensors()) {
    if (active_only && !s.active) continue;
    for (auto& b : s.branches) {
      if (active_only && !b.active) continue;
      auto& e = b.encoder;
      for (auto* layer : {&e.conv1, &e.conv2, &e.conv3}) {
        params.push_back(&layer->weight);
        params.push_back(&layer->bias);
      }
      for (auto* bn : {&e.bn1, &e.bn2}) {
        params.push_back(&bn->gamma);
        params.push_back(&bn->beta);
        bns.push_back(bn);
      }
    }
    params.push_back(&s.rate_gate.alpha);
  }
  params.push_back(&m.sensor_gate().alpha);
  for (auto* layer : {&m.hidden(), &m.output()}) {
    params.push_back(&layer->weight);
    params.push_back(&layer->bias);
  }
}

} // namespace

std::vector<nn::Parameter*> CossModel::parameters(bool active_only) {
  std::vector<nn::Parameter*> p;
  std::vector<nn::BatchNorm*> b;
  collect(*this, active_only, p, b);
  return p;
}

std::vector<const nn::Parameter*> CossModel::parameters(bool active_only) const {
  std::vector<const nn::Parameter*> p;
  std::vector<const nn::BatchNorm*> b;
  collect(*this, active_only, p, b);
  return p;
}

std::vector<nn::BatchNorm*> CossModel::batch_norms(bool active_only) {
  std::vector<nn::Parameter*> p;
  std::vector<nn::BatchNorm*> b;
  collect(*this, active_only, p, b);
  return b;
}

std::vector<const nn::BatchNorm*> CossModel::batch_norms(bool active_only) const {
  std::vector<const nn::Parameter*> p;
  std::vector<const nn::BatchNorm*> b;
  collect(*this, active_only, p, b);
  return b;
}

nn::Var gate_fusion(std::span<const nn::Var> features, const nn::Var& alpha,
                    std::span<const std::size_t> active) {
  if (active.empty()) throw StateError("gate fusion: no active inputs");
  if (features.size() != active.size()) {
    throw ShapeError(fmt::format("gate fusion: {} features for {} active gates", features.size(), active.size()));
  }
  return nn::weighted_sum(features, nn::softmax(nn::gather(alpha, active)));
}

nn::Var rate_fusion(std::span<const nn::Var> features, const nn::Var& alpha,
                    std::span<const std::size_t> active) {
  return gate_fusion(features, alpha, active);
}

nn::Var sensor_fusion(std::span<const nn::Var> fused, const nn::Var& alpha,
                      std::span<const std::size_t> active) {
  return gate_fusion(fused, alpha, active);
}

namespace {

// The training graph outlives the call, so it owns a copy of each input.
struct TrainBinding {
  nn::Var input(const Tensor& x) const { return nn::constant(x); }
  nn::Var param(nn::Parameter& p) const { return nn::parameter(p); }
  nn::Var norm(const nn::Var& x, nn::BatchNorm& bn) const { return nn::batch_norm(x, bn); }
};

struct InferenceBinding {
  nn::Var input(const Tensor& x) const { return nn::constant_ref(x); }
  nn::Var param(const nn::Parameter& p) const { return nn::constant_ref(p.value); }
  nn::Var norm(const nn::Var& x, const nn::BatchNorm& bn) const { return nn::batch_norm_inference(x, bn); }
};

template <class EncoderT, class Binding>
nn::Var encode(EncoderT& e, nn::Var x, const Binding& bind) {
  auto conv = [&](const nn::Var& in, auto& layer) {
    return nn::conv1d(in, bind.param(layer.weight), bind.param(layer.bias));
  };
  x = bind.norm(nn::relu(conv(x, e.conv1)), e.bn1);
  x = bind.norm(nn::relu(conv(x, e.conv2)), e.bn2);
  x = nn::relu(conv(x, e.conv3));
  return nn::global_max_pool(x);
}

template <class Model, class Binding>
nn::Var classify_var(Model& m, const nn::Var& fused, const Binding& bind) {
  auto h = nn::relu(nn::dense(fused, bind.param(m.hidden().weight), bind.param(m.hidden().bias)));
  return nn::dense(h, bind.param(m.output().weight), bind.param(m.output().bias));
}

template <class Model, class Binding>
nn::Var forward_impl(Model& m, const BranchInputs& in, const Binding& bind) {
  auto& sensors = m.sensors();
  if (in.tensors.size() != sensors.size()) {
    throw InputError(fmt::format("expected inputs for {} sensors, got {}", sensors.size(), in.tensors.size()));
  }
  std::size_t batch = 0;
  std::vector<nn::Var> per_sensor;
  const auto active_sensors = m.active_sensor_indices();
  for (std::size_t s : active_sensors) {
    auto& block = sensors[s];
    if (in.tensors[s].size() != block.branches.size()) {
      throw InputError(fmt::format("sensor {}: expected {} rate inputs, got {}", block.config.id,
                                   block.branches.size(), in.tensors[s].size()));
    }
    const auto active = block.active_indices();
    std::vector<nn::Var> feats;
    for (std::size_t r : active) {
      auto& br = block.branches[r];
      const Tensor& x = in.tensors[s][r];
      if (x.empty()) throw InputError(fmt::format("missing input for branch {}", branch_label(block, br)));
      if (x.rank() != 3 || x.dim(1) != block.config.channels || x.dim(2) != br.geometry.input_length) {
        throw InputError(fmt::format("branch {}: input shape {} does not match [batch,{},{}]",
                                     branch_label(block, br), shape_string(x.shape()),
                                     block.config.channels, br.geometry.input_length));
      }
      if (batch == 0) batch = x.dim(0);
      if (x.dim(0) != batch) throw InputError("inputs disagree on batch size");
      feats.push_back(encode(br.encoder, bind.input(x), bind));
    }
    per_sensor.push_back(rate_fusion(feats, bind.param(block.rate_gate.alpha), active));
  }
  auto mixed = sensor_fusion(per_sensor, bind.param(m.sensor_gate().alpha), active_sensors);
  return classify_var(m, mixed, bind);
}

} // namespace

nn::Var forward(CossModel& model, const BranchInputs& inputs) {
  return forward_impl(model, inputs, TrainBinding{});
}

Tensor predict(const CossModel& model, const BranchInputs& inputs) {
  return forward_impl(model, inputs, InferenceBinding{}).value();
}

Tensor encode_branch(const Branch& branch, const Tensor& input) {
  return encode(branch.encoder, nn::constant_ref(input), InferenceBinding{}).value();
}

Tensor classify(const CossModel& model, const Tensor& fused) {
  return classify_var(model, nn::constant_ref(fused), InferenceBinding{}).value();
}

GateWeights gate_weights(const CossModel& model) {
  GateWeights out;
  const auto sensor_w = model.sensor_gate().weights(model.active_sensors());
  for (std::size_t s = 0; s < model.sensors().size(); ++s) {
    const auto& block = model.sensors()[s];
    if (!block.active) continue;
    SensorScore score{block.config.id, sensor_w[s], {}};
    const auto mask = block.active_branches();
    const auto rate_w = block.rate_gate.weights(mask);
    for (std::size_t r = 0; r < block.branches.size(); ++r)
      if (mask[r]) score.rates.push_back({block.branches[r].rate(), rate_w[r]});
    out.push_back(std::move(score));
  }
  return out;
}

} // namespace coss
