#pragma once

// Text tables and summary records for the command-line tools.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "coss/cost.hpp"
#include "coss/metrics.hpp"
#include "coss/model.hpp"
#include "coss/prune.hpp"

namespace coss {

/// Sensor scores and per-sensor rate scores, each sorted descending.
std::string render_gate_tables(const GateWeights& weights);
nlohmann::json gate_weights_json(const GateWeights& weights);

std::string render_metrics(const Metrics& m, const std::string& title);
nlohmann::json metrics_json(const Metrics& m);

std::string render_prune_curve(const PruneCurve& curve, Metric metric);
std::string render_rate_selection(const RateSelectionResult& r, const std::vector<RateProbe>& probes, Metric metric);

/// One row per category of the result summary.
struct Summary {
  std::string metric;
  std::vector<std::string> pruned_sensors;
  double performance_reduction = 0; // percentage points, after fine-tuning if it ran
  ReductionReport reduction;
  std::map<std::string, double> selected_rates; // empty if rate selection did not run
  std::vector<std::string> rate_order;          // sensor order for the rates row
};

std::string render_summary(const Summary& s);
void to_json(nlohmann::json& j, const Summary& s);

} // namespace coss
