#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "coss/data.hpp"
#include "coss/metrics.hpp"
#include "coss/model.hpp"
#include "coss/optim.hpp"

namespace coss {

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct SplitResult {
  std::vector<std::size_t> train, validation, test;
  /// One entry per (class, split) pair left without windows.
  std::vector<std::string> warnings;
};

/// Label-stratified random partition, written to ds.split. Windows are ordered
/// by (class, shuffled position) and dealt to splits by largest deficit, so
/// split totals equal the rounded ratio counts and every class is split in
/// proportion up to rounding.
SplitResult split_dataset(WindowedDataset& ds, const SplitRatios& ratios, std::uint64_t seed);

struct TrainConfig {
  nn::SgdConfig sgd;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
  std::size_t fine_tune_epochs = 10;
  std::uint64_t seed = 0;
  Metric metric = Metric::macro_f1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Resampled inputs for every branch, computed once per dataset.
class PreparedData {
public:
  PreparedData(const WindowedDataset& ds, const ModelConfig& cfg);

  BranchInputs gather(std::span<const std::size_t> windows) const;
  std::vector<int> labels(std::span<const std::size_t> windows) const;
  std::vector<std::size_t> indices(Split which) const;
  std::size_t num_windows() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }

private:
  std::vector<std::vector<Tensor>> cache_; // [sensor][rate] -> [windows, channels, len]
  std::vector<int> labels_;
  std::vector<Split> split_;
  std::size_t num_classes_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_metric = 0;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  double best_val_metric = 0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0;
};

/// Called after every optimizer step.
using StepObserver = std::function<void(const CossModel&, const StepInfo&)>;

/// Mini-batch SGD with early stopping on validation loss. On return the model
/// holds the weights of the best epoch and is in inference mode.
History train(CossModel& model, const PreparedData& data, const TrainConfig& cfg,
              const StepObserver& observer = {});

/// cfg.fine_tune_epochs epochs over the surviving parameters, no early stopping.
void fine_tune(CossModel& model, const PreparedData& data, const TrainConfig& cfg,
               const StepObserver& observer = {});

/// Inference-mode metrics and mean cross-entropy on one split.
Metrics evaluate(const CossModel& model, const PreparedData& data, Split split);
Metrics evaluate(const CossModel& model, const PreparedData& data, std::span<const std::size_t> windows);

} // namespace coss
