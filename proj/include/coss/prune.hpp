#pragma once

// Sensor ranking, progressive sensor pruning and per-sensor rate selection.
// Pruning only flips activity flags; no parameter is modified.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "coss/cost.hpp"
#include "coss/metrics.hpp"
#include "coss/model.hpp"
#include "coss/train.hpp"

namespace coss {

struct SensorRank {
  std::string sensor_id;
  double score = 0;
};

/// Active sensors by descending sensor-gate weight; ties by ascending id.
std::vector<SensorRank> rank_sensors(const CossModel& model);

/// Deactivates every branch of the sensor. StateError for the last active sensor.
void prune_sensor(CossModel& model, std::string_view sensor_id);

/// Keeps only the branch at `rate` for the sensor. InputError if the rate is
/// not an active candidate.
void select_rate(CossModel& model, std::string_view sensor_id, double rate);

struct PruneStep {
  std::string removed_sensor;
  std::vector<std::string> remaining;
  double metric_before = 0;
  double metric_after = 0;
  std::optional<double> metric_after_finetune;
  CostSnapshot cost_after;
};

struct PruneOptions {
  Split split = Split::validation;
  Metric metric = Metric::macro_f1;
  bool finetune_each = false;
  TrainConfig train; // used when finetune_each is set
};

struct PruneCurve {
  double baseline_metric = 0;
  CostSnapshot baseline_cost;
  std::vector<PruneStep> steps;
};

/// Removes the lowest-ranked sensor until one remains, evaluating after each
/// removal. Without finetune_each the input model's weights are used as is.
PruneCurve progressive_prune(const CossModel& model, const PreparedData& data, const PruneOptions& opts);

/// Largest k whose k-step pruned model stays within max_drop_points of the
/// baseline (points = 100 * metric).
std::size_t threshold_count(const PruneCurve& curve, double max_drop_points);

/// Copy of `model` with the first `count` sensors of the curve pruned.
CossModel apply_pruning(const CossModel& model, const PruneCurve& curve, std::size_t count);
std::vector<std::string> pruned_sensors(const PruneCurve& curve, std::size_t count);

struct RateSensitivity {
  std::string sensor_id;
  double std_dev = 0;
};

/// Population standard deviation of each active sensor's rate scores.
std::vector<RateSensitivity> rate_sensitivity(const CossModel& model);

struct RateProbe {
  std::string sensor_id;
  double rate = 0;
  double metric = 0;
};

/// Metric with one sensor restricted to one rate and every other sensor left
/// untouched, for every active (sensor, rate) pair.
std::vector<RateProbe> probe_rates(const CossModel& model, const PreparedData& data, Split split, Metric metric);

struct RateSelectionTrace {
  std::string sensor_id;
  double rate = 0;
  double metric = 0;
  bool accepted = false;
};

struct RateSelectionResult {
  RateSelection selection;
  double baseline_metric = 0;
  std::vector<RateSelectionTrace> trace;
};

/// Starts from the top-scored rate of every active sensor, then walks sensors
/// in ascending importance and lowers each one's rate while the metric stays
/// within max_drop_points of the unselected model.
RateSelectionResult select_rates(const CossModel& model, const PreparedData& data, double max_drop_points,
                                 Split split, Metric metric);

CossModel apply_rates(const CossModel& model, const RateSelection& selection);

void to_json(nlohmann::json& j, const SensorRank& r);
void to_json(nlohmann::json& j, const PruneStep& s);
void to_json(nlohmann::json& j, const PruneCurve& c);
void to_json(nlohmann::json& j, const RateSensitivity& r);
void to_json(nlohmann::json& j, const RateProbe& p);
void to_json(nlohmann::json& j, const RateSelectionTrace& t);
void to_json(nlohmann::json& j, const RateSelectionResult& r);

} // namespace coss
