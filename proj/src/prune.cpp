#include "coss/prune.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "coss/error.hpp"

namespace coss {

std::vector<SensorRank> rank_sensors(const CossModel& model) {
  std::vector<SensorRank> ranks;
  for (const auto& s : gate_weights(model)) ranks.push_back({s.sensor_id, s.score});
  std::stable_sort(ranks.begin(), ranks.end(), [](const SensorRank& a, const SensorRank& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sensor_id < b.sensor_id;
  });
  return ranks;
}

void prune_sensor(CossModel& model, std::string_view sensor_id) {
  SensorBlock& s = model.sensor(sensor_id);
  if (!s.active) throw StateError(fmt::format("sensor {} is already pruned", sensor_id));
  if (model.active_sensor_indices().size() == 1) {
    throw StateError(fmt::format("cannot prune {}: it is the last active sensor", sensor_id));
  }
  s.active = false;
  for (auto& b : s.branches) b.active = false;
}

void select_rate(CossModel& model, std::string_view sensor_id, double rate) {
  SensorBlock& s = model.sensor(sensor_id);
  if (!s.active) throw StateError(fmt::format("sensor {} is pruned", sensor_id));
  const std::size_t keep = s.branch_index(rate);
  if (!s.branches[keep].active) {
    throw InputError(fmt::format("sensor {}: {} Hz is not an active rate", sensor_id, format_rate(rate)));
  }
  for (std::size_t j = 0; j < s.branches.size(); ++j) s.branches[j].active = (j == keep);
}

PruneCurve progressive_prune(const CossModel& model, const PreparedData& data, const PruneOptions& opts) {
  PruneCurve curve;
  CossModel current = model;
  current.set_mode(nn::BnMode::inference);
  curve.baseline_metric = evaluate(current, data, opts.split).get(opts.metric);
  curve.baseline_cost = cost_snapshot(current);
  double before = curve.baseline_metric;
  while (current.active_sensor_indices().size() > 1) {
    const auto ranks = rank_sensors(current);
    PruneStep step;
    step.removed_sensor = ranks.back().sensor_id;
    prune_sensor(current, step.removed_sensor);
    for (std::size_t i = 0; i + 1 < ranks.size(); ++i) step.remaining.push_back(ranks[i].sensor_id);
    step.metric_before = before;
    step.metric_after = evaluate(current, data, opts.split).get(opts.metric);
    if (opts.finetune_each) {
      fine_tune(current, data, opts.train);
      step.metric_after_finetune = evaluate(current, data, opts.split).get(opts.metric);
    }
    step.cost_after = cost_snapshot(current);
    before = step.metric_after_finetune.value_or(step.metric_after);
    curve.steps.push_back(std::move(step));
  }
  return curve;
}

std::size_t threshold_count(const PruneCurve& curve, double max_drop_points) {
  if (max_drop_points < 0) throw ConfigError("max drop must be non-negative");
  std::size_t count = 0;
  for (std::size_t i = 0; i < curve.steps.size(); ++i) {
    const auto& s = curve.steps[i];
    const double m = s.metric_after_finetune.value_or(s.metric_after);
    if (100.0 * (curve.baseline_metric - m) <= max_drop_points) count = i + 1;
  }
  return count;
}

std::vector<std::string> pruned_sensors(const PruneCurve& curve, std::size_t count) {
  if (count > curve.steps.size()) throw InputError(fmt::format("curve has only {} steps", curve.steps.size()));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < count; ++i) ids.push_back(curve.steps[i].removed_sensor);
  return ids;
}

CossModel apply_pruning(const CossModel& model, const PruneCurve& curve, std::size_t count) {
  CossModel out = model;
  for (const auto& id : pruned_sensors(curve, count)) prune_sensor(out, id);
  return out;
}

std::vector<RateSensitivity> rate_sensitivity(const CossModel& model) {
  std::vector<RateSensitivity> out;
  for (const auto& s : gate_weights(model)) {
    double mean = 0;
    for (const auto& r : s.rates) mean += r.score;
    mean /= double(s.rates.size());
    double var = 0;
    for (const auto& r : s.rates) var += (r.score - mean) * (r.score - mean);
    out.push_back({s.sensor_id, std::sqrt(var / double(s.rates.size()))});
  }
  return out;
}

std::vector<RateProbe> probe_rates(const CossModel& model, const PreparedData& data, Split split, Metric metric) {
  std::vector<RateProbe> out;
  for (const auto& s : model.sensors()) {
    if (!s.active) continue;
    for (std::size_t j : s.active_indices()) {
      CossModel probe = model;
      select_rate(probe, s.config.id, s.branches[j].rate());
      out.push_back({s.config.id, s.branches[j].rate(), evaluate(probe, data, split).get(metric)});
    }
  }
  return out;
}

CossModel apply_rates(const CossModel& model, const RateSelection& selection) {
  CossModel out = model;
  for (const auto& [id, rate] : selection.rates) select_rate(out, id, rate);
  return out;
}

RateSelectionResult select_rates(const CossModel& model, const PreparedData& data, double max_drop_points,
                                 Split split, Metric metric) {
  if (max_drop_points < 0) throw ConfigError("max drop must be non-negative");
  RateSelectionResult res;
  res.baseline_metric = evaluate(model, data, split).get(metric);

  for (const auto& s : gate_weights(model)) {
    // Highest score wins; equal scores go to the faster rate.
    const RateScore* best = &s.rates.front();
    for (const auto& r : s.rates)
      if (r.score > best->score || (r.score == best->score && r.rate > best->rate)) best = &r;
    res.selection.rates[s.sensor_id] = best->rate;
  }
  double current = evaluate(apply_rates(model, res.selection), data, split).get(metric);

  auto ranks = rank_sensors(model);
  std::reverse(ranks.begin(), ranks.end());
  for (const auto& rank : ranks) {
    const SensorBlock& s = model.sensor(rank.sensor_id);
    std::vector<double> lower;
    for (std::size_t j : s.active_indices()) {
      if (s.branches[j].rate() < res.selection.rates[rank.sensor_id]) lower.push_back(s.branches[j].rate());
    }
    std::sort(lower.rbegin(), lower.rend());
    for (double rate : lower) {
      RateSelection trial = res.selection;
      trial.rates[rank.sensor_id] = rate;
      const double m = evaluate(apply_rates(model, trial), data, split).get(metric);
      const bool ok = 100.0 * (res.baseline_metric - m) <= max_drop_points;
      res.trace.push_back({rank.sensor_id, rate, m, ok});
      if (!ok) break;
      res.selection = std::move(trial);
      current = m;
    }
  }
  res.selection.metric = current;
  return res;
}

void to_json(nlohmann::json& j, const SensorRank& r) { j = nlohmann::json{{"sensor", r.sensor_id}, {"score", r.score}}; }

void to_json(nlohmann::json& j, const PruneStep& s) {
  j = nlohmann::json{{"removed_sensor", s.removed_sensor},
                     {"remaining", s.remaining},
                     {"metric_before", s.metric_before},
                     {"metric_after", s.metric_after},
                     {"metric_after_finetune", nullptr},
                     {"cost_after", s.cost_after}};
  if (s.metric_after_finetune) j["metric_after_finetune"] = *s.metric_after_finetune;
}

void to_json(nlohmann::json& j, const PruneCurve& c) {
  j = nlohmann::json{{"baseline_metric", c.baseline_metric}, {"baseline_cost", c.baseline_cost}, {"steps", c.steps}};
}

void to_json(nlohmann::json& j, const RateSensitivity& r) {
  j = nlohmann::json{{"sensor", r.sensor_id}, {"std", r.std_dev}};
}

void to_json(nlohmann::json& j, const RateProbe& p) {
  j = nlohmann::json{{"sensor", p.sensor_id}, {"rate", p.rate}, {"metric", p.metric}};
}

void to_json(nlohmann::json& j, const RateSelectionTrace& t) {
  j = nlohmann::json{{"sensor", t.sensor_id}, {"rate", t.rate}, {"metric", t.metric}, {"accepted", t.accepted}};
}

void to_json(nlohmann::json& j, const RateSelectionResult& r) {
  j = nlohmann::json{{"selection", r.selection}, {"baseline_metric", r.baseline_metric}, {"trace", r.trace}};
}

} // namespace coss
