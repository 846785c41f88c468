#include "coss/report.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace coss {

namespace {

std::string rule(std::size_t width) { return std::string(width, '-') + "\n"; }

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

} // namespace

std::string render_gate_tables(const GateWeights& weights) {
  std::vector<const SensorScore*> sensors;
  for (const auto& s : weights) sensors.push_back(&s);
  std::stable_sort(sensors.begin(), sensors.end(), [](const SensorScore* a, const SensorScore* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->sensor_id < b->sensor_id;
  });
  std::string out = "Sensor weight scores\n";
  out += fmt::format("{:<6} {:<12} {:>8}\n", "rank", "sensor", "score");
  out += rule(28);
  for (std::size_t i = 0; i < sensors.size(); ++i)
    out += fmt::format("{:<6} {:<12} {:>8.4f}\n", i + 1, sensors[i]->sensor_id, sensors[i]->score);

  out += "\nSampling-rate weight scores\n";
  out += fmt::format("{:<12} {:>8} {:>8}\n", "sensor", "rate_hz", "score");
  out += rule(30);
  for (const auto* s : sensors) {
    auto rates = s->rates;
    std::stable_sort(rates.begin(), rates.end(), [](const RateScore& a, const RateScore& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.rate > b.rate;
    });
    for (const auto& r : rates) out += fmt::format("{:<12} {:>8} {:>8.4f}\n", s->sensor_id, format_rate(r.rate), r.score);
  }
  return out;
}

nlohmann::json gate_weights_json(const GateWeights& weights) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : weights) {
    nlohmann::json rates = nlohmann::json::array();
    for (const auto& r : s.rates) rates.push_back({{"rate", r.rate}, {"score", r.score}});
    j.push_back({{"sensor", s.sensor_id}, {"score", s.score}, {"rates", rates}});
  }
  return j;
}

std::string render_metrics(const Metrics& m, const std::string& title) {
  std::string out = fmt::format("{}\n", title);
  out += fmt::format("  accuracy  {:.4f}\n  macro_f1  {:.4f}\n  loss      {:.4f}\n", m.accuracy, m.macro_f1, m.loss);
  out += "  per-class f1:";
  for (double f : m.per_class_f1) out += fmt::format(" {:.3f}", f);
  out += "\n  confusion (rows = true):\n";
  for (const auto& row : m.confusion) {
    out += "   ";
    for (auto v : row) out += fmt::format(" {:>5}", v);
    out += "\n";
  }
  return out;
}

nlohmann::json metrics_json(const Metrics& m) {
  return nlohmann::json{{"accuracy", m.accuracy},
                        {"macro_f1", m.macro_f1},
                        {"per_class_f1", m.per_class_f1},
                        {"confusion", m.confusion},
                        {"loss", m.loss}};
}

std::string render_prune_curve(const PruneCurve& curve, Metric metric) {
  std::string out = fmt::format("Progressive sensor pruning ({}, no retraining unless noted)\n", to_string(metric));
  out += fmt::format("{:<5} {:<10} {:>9} {:>9} {:>10} {:>10} {:>12}  {}\n", "step", "removed", "metric", "drop_pts",
                     "finetuned", "params", "macs/window", "remaining");
  out += rule(92);
  out += fmt::format("{:<5} {:<10} {:>9.4f} {:>9.2f} {:>10} {:>10} {:>12}\n", 0, "-", curve.baseline_metric, 0.0, "-",
                     curve.baseline_cost.params, curve.baseline_cost.macs_per_window);
  for (std::size_t i = 0; i < curve.steps.size(); ++i) {
    const auto& s = curve.steps[i];
    const std::string ft = s.metric_after_finetune ? fmt::format("{:.4f}", *s.metric_after_finetune) : "-";
    out += fmt::format("{:<5} {:<10} {:>9.4f} {:>9.2f} {:>10} {:>10} {:>12}  {}\n", i + 1, s.removed_sensor,
                       s.metric_after, 100.0 * (curve.baseline_metric - s.metric_after), ft, s.cost_after.params,
                       s.cost_after.macs_per_window, join(s.remaining, ","));
  }
  return out;
}

std::string render_rate_selection(const RateSelectionResult& r, const std::vector<RateProbe>& probes, Metric metric) {
  std::string out = fmt::format("Single-rate probes ({}; other sensors keep all rates)\n", to_string(metric));
  out += fmt::format("{:<12} {:>8} {:>9} {:>9}\n", "sensor", "rate_hz", "metric", "drop_pts");
  out += rule(41);
  for (const auto& p : probes) {
    out += fmt::format("{:<12} {:>8} {:>9.4f} {:>9.2f}\n", p.sensor_id, format_rate(p.rate), p.metric,
                       100.0 * (r.baseline_metric - p.metric));
  }
  out += "\nSelected rates\n";
  for (const auto& [id, hz] : r.selection.rates) out += fmt::format("  {:<12} {} Hz\n", id, format_rate(hz));
  out += fmt::format("  metric {:.4f} (unselected {:.4f})\n", r.selection.metric, r.baseline_metric);
  return out;
}

std::string render_summary(const Summary& s) {
  std::vector<std::string> rates;
  for (const auto& id : s.rate_order) {
    auto it = s.selected_rates.find(id);
    if (it != s.selected_rates.end()) rates.push_back(fmt::format("{}({})", format_rate(it->second), id));
  }
  const auto& r = s.reduction;
  std::string out = "Result summary\n";
  out += rule(72);
  out += fmt::format("{:<36} {}\n", "Pruned sensors", s.pruned_sensors.empty() ? "-" : join(s.pruned_sensors, ","));
  out += fmt::format("{:<36} {:.2f}\n", fmt::format("Performance reduction(%) [{}]", s.metric), s.performance_reduction);
  out += fmt::format("{:<36} {}\n", "Model size reduction(MB)", format_size_reduction(r));
  out += fmt::format("{:<36} {:.1f}\n", "Model size reduction(%)", r.size_reduction_pct);
  out += fmt::format("{:<36} {}\n", "Selected sampling rate (Hz)", rates.empty() ? "-" : join(rates, ", "));
  out += fmt::format("{:<36} {}/{} ({:.0f}%)\n", "MACs per window", r.macs_after, r.macs_before,
                     r.macs_reduction_pct);
  out += fmt::format("{:<36} {}/{} ({:.0f}%)\n", "Sensor data rate (samples/s)", r.data_rate_after,
                     r.data_rate_before, r.data_rate_reduction_pct);
  out += rule(72);
  return out;
}

void to_json(nlohmann::json& j, const Summary& s) {
  j = nlohmann::json{{"metric", s.metric},
                     {"pruned_sensors", s.pruned_sensors},
                     {"performance_reduction", s.performance_reduction},
                     {"size_reduction", format_size_reduction(s.reduction)},
                     {"size_reduction_pct", s.reduction.size_reduction_pct},
                     {"selected_rates", s.selected_rates},
                     {"reduction", s.reduction}};
}

} // namespace coss
