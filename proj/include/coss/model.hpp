#pragma once

// The multi-branch gated classifier.
//
// One encoder branch per (sensor, rate candidate):
//   conv -> ReLU -> BN -> conv -> ReLU -> BN -> conv -> ReLU -> global max pool
// Branch features of one sensor are mixed by the softmax of that sensor's rate
// gate; the per-sensor features are mixed by the softmax of the sensor gate and
// fed to a two-layer dense classifier. Gate softmaxes are taken over active
// entries only, so deactivating a branch or sensor renormalizes the survivors.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coss/autograd.hpp"
#include "coss/config.hpp"
#include "coss/tensor.hpp"

namespace coss {

struct Conv1dLayer {
  nn::Parameter weight; // [out, in, kernel]
  nn::Parameter bias;   // [out]
};

struct DenseLayer {
  nn::Parameter weight; // [out, in]
  nn::Parameter bias;   // [out]
};

struct Encoder {
  Conv1dLayer conv1, conv2, conv3;
  nn::BatchNorm bn1, bn2;
};

struct Branch {
  BranchGeometry geometry;
  Encoder encoder;
  bool active = true;

  double rate() const noexcept { return geometry.rate; }
};

struct GateLayer {
  nn::Parameter alpha;

  /// softmax(alpha) over the flagged entries; unflagged entries get 0.
  std::vector<double> weights(const std::vector<bool>& active) const;
};

struct SensorBlock {
  SensorConfig config;
  std::vector<Branch> branches;
  GateLayer rate_gate;
  bool active = true;

  std::vector<bool> active_branches() const;
  std::vector<std::size_t> active_indices() const;
  std::size_t branch_index(double rate) const;
};

/// Inputs aligned with the configuration: tensors[s][r] is [batch, channels, len]
/// for sensor s at its r-th rate candidate. Entries of inactive branches may be empty.
struct BranchInputs {
  std::vector<std::vector<Tensor>> tensors;
};

struct RateScore {
  double rate = 0;
  double score = 0;
};

struct SensorScore {
  std::string sensor_id;
  double score = 0;
  std::vector<RateScore> rates;
};

/// Normalized weight scores of active sensors and their active rates, in config order.
using GateWeights = std::vector<SensorScore>;

class CossModel {
public:
  /// Validates `cfg` and initializes every parameter from cfg.seed. Each
  /// branch draws from its own stream keyed by (sensor id, rate).
  explicit CossModel(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return config_; }

  std::vector<SensorBlock>& sensors() noexcept { return sensors_; }
  const std::vector<SensorBlock>& sensors() const noexcept { return sensors_; }
  SensorBlock& sensor(std::string_view id);
  const SensorBlock& sensor(std::string_view id) const;
  std::size_t sensor_index(std::string_view id) const;

  GateLayer& sensor_gate() noexcept { return sensor_gate_; }
  const GateLayer& sensor_gate() const noexcept { return sensor_gate_; }
  DenseLayer& hidden() noexcept { return hidden_; }
  const DenseLayer& hidden() const noexcept { return hidden_; }
  DenseLayer& output() noexcept { return output_; }
  const DenseLayer& output() const noexcept { return output_; }

  std::vector<bool> active_sensors() const;
  std::vector<std::size_t> active_sensor_indices() const;

  void set_mode(nn::BnMode mode);
  nn::BnMode mode() const noexcept { return mode_; }

  /// Trainable parameters; with active_only, those of pruned branches and
  /// sensors are left out.
  std::vector<nn::Parameter*> parameters(bool active_only = true);
  std::vector<const nn::Parameter*> parameters(bool active_only = true) const;
  std::vector<nn::BatchNorm*> batch_norms(bool active_only = true);
  std::vector<const nn::BatchNorm*> batch_norms(bool active_only = true) const;

private:
  ModelConfig config_;
  std::vector<SensorBlock> sensors_;
  GateLayer sensor_gate_;
  DenseLayer hidden_;
  DenseLayer output_;
  nn::BnMode mode_ = nn::BnMode::training;
};

CossModel build_model(const ModelConfig& cfg);

/// sum_j features[j] * softmax(alpha[active])_j. `features` is aligned with `active`.
nn::Var gate_fusion(std::span<const nn::Var> features, const nn::Var& alpha,
                    std::span<const std::size_t> active);
/// Mixes one sensor's branch features with its rate gate.
nn::Var rate_fusion(std::span<const nn::Var> features, const nn::Var& alpha,
                    std::span<const std::size_t> active);
/// Mixes per-sensor features with the sensor gate.
nn::Var sensor_fusion(std::span<const nn::Var> fused, const nn::Var& alpha,
                      std::span<const std::size_t> active);

/// Differentiable forward pass; batch norms follow the model's mode.
nn::Var forward(CossModel& model, const BranchInputs& inputs);
/// Inference forward pass (running batch-norm statistics); returns logits.
Tensor predict(const CossModel& model, const BranchInputs& inputs);

/// Inference-mode pooled features [batch, filters] of one branch.
Tensor encode_branch(const Branch& branch, const Tensor& input);
/// Inference-mode classifier head on fused features [batch, filters].
Tensor classify(const CossModel& model, const Tensor& fused);

GateWeights gate_weights(const CossModel& model);

/// Human-readable branch label, e.g. "S1@50Hz".
std::string branch_label(const SensorBlock& sensor, const Branch& branch);

} // namespace coss
