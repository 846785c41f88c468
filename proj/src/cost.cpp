#include "coss/cost.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "coss/error.hpp"

namespace coss {

std::size_t conv_param_count(std::size_t in, std::size_t out, std::size_t kernel) { return out * in * kernel + out; }
std::size_t dense_param_count(std::size_t in, std::size_t out) { return out * in + out; }
std::size_t batch_norm_param_count(std::size_t channels) { return 2 * channels; }
std::uint64_t conv_macs(std::size_t in, std::size_t out, std::size_t kernel, std::size_t out_len) {
  return std::uint64_t(in) * out * kernel * out_len;
}

namespace {

BranchCost branch_cost(const SensorBlock& s, const Branch& b, std::size_t filters) {
  const auto& g = b.geometry;
  BranchCost c{s.config.id, b.rate(), g.kernel, 0, 0};
  c.params = conv_param_count(s.config.channels, filters, g.kernel) + 2 * conv_param_count(filters, filters, g.kernel) +
             2 * batch_norm_param_count(filters);
  c.macs = conv_macs(s.config.channels, filters, g.kernel, g.conv_length[0]) +
           conv_macs(filters, filters, g.kernel, g.conv_length[1]) +
           conv_macs(filters, filters, g.kernel, g.conv_length[2]);
  return c;
}

} // namespace

CostSnapshot cost_snapshot(const CossModel& model) {
  const auto& cfg = model.config();
  CostSnapshot snap;
  std::size_t active_sensors = 0;
  for (const auto& s : model.sensors()) {
    if (!s.active) continue;
    ++active_sensors;
    for (const auto& b : s.branches) {
      if (!b.active) continue;
      auto bc = branch_cost(s, b, cfg.filters);
      snap.params += bc.params;
      snap.macs_per_window += bc.macs;
      snap.gate_params += 1;
      snap.branches.push_back(std::move(bc));
    }
  }
  snap.gate_params += active_sensors;
  snap.classifier_params = dense_param_count(cfg.filters, cfg.classifier_hidden) +
                           dense_param_count(cfg.classifier_hidden, cfg.num_classes);
  snap.classifier_macs = std::uint64_t(cfg.filters) * cfg.classifier_hidden +
                         std::uint64_t(cfg.classifier_hidden) * cfg.num_classes;
  snap.params += snap.gate_params + snap.classifier_params;
  snap.macs_per_window += snap.classifier_macs;
  snap.bytes = snap.params * kDeployBytesPerParam;
  snap.bytes_f64 = snap.params * 8;
  snap.data_rate = data_rate(model);
  return snap;
}

std::size_t param_count(const CossModel& model) { return cost_snapshot(model).params; }
std::uint64_t macs_per_window(const CossModel& model) { return cost_snapshot(model).macs_per_window; }

double data_rate(const RateSelection& selection, const std::vector<SensorConfig>& sensors) {
  double total = 0;
  for (const auto& [id, hz] : selection.rates) {
    auto it = std::find_if(sensors.begin(), sensors.end(), [&](const SensorConfig& s) { return s.id == id; });
    if (it == sensors.end()) throw InputError(fmt::format("rate selection names unknown sensor '{}'", id));
    total += double(it->channels) * hz;
  }
  return total;
}

double data_rate(const CossModel& model) {
  double total = 0;
  for (const auto& s : model.sensors()) {
    if (!s.active) continue;
    double fastest = 0;
    for (const auto& b : s.branches)
      if (b.active) fastest = std::max(fastest, b.rate());
    total += double(s.config.channels) * fastest;
  }
  return total;
}

namespace {
double pct(double before, double after) { return before > 0 ? 100.0 * (before - after) / before : 0.0; }
} // namespace

ReductionReport reduction_report(const CostSnapshot& before, const CostSnapshot& after, double metric_before,
                                 double metric_after) {
  ReductionReport r;
  r.params_before = before.params;
  r.params_after = after.params;
  r.size_mb_before = before.megabytes();
  r.size_mb_after = after.megabytes();
  r.size_reduction_mb = r.size_mb_before - r.size_mb_after;
  r.size_reduction_pct = pct(double(before.params), double(after.params));
  r.macs_before = before.macs_per_window;
  r.macs_after = after.macs_per_window;
  r.macs_reduction_pct = pct(double(before.macs_per_window), double(after.macs_per_window));
  r.data_rate_before = before.data_rate;
  r.data_rate_after = after.data_rate;
  r.data_rate_reduction_pct = pct(before.data_rate, after.data_rate);
  r.metric_before = metric_before;
  r.metric_after = metric_after;
  r.performance_reduction = 100.0 * (metric_before - metric_after);
  return r;
}

std::string format_size_reduction(const ReductionReport& r) {
  return fmt::format("{:.2f}/{:.2f} ({:.0f}%)", r.size_reduction_mb, r.size_mb_before, r.size_reduction_pct);
}

void to_json(nlohmann::json& j, const BranchCost& b) {
  j = nlohmann::json{{"sensor", b.sensor_id}, {"rate", b.rate}, {"kernel", b.kernel}, {"params", b.params}, {"macs", b.macs}};
}

void to_json(nlohmann::json& j, const CostSnapshot& c) {
  j = nlohmann::json{{"params", c.params},
                     {"bytes", c.bytes},
                     {"bytes_f64", c.bytes_f64},
                     {"megabytes", c.megabytes()},
                     {"macs_per_window", c.macs_per_window},
                     {"data_rate", c.data_rate},
                     {"gate_params", c.gate_params},
                     {"classifier_params", c.classifier_params},
                     {"classifier_macs", c.classifier_macs},
                     {"branches", c.branches}};
}

void to_json(nlohmann::json& j, const ReductionReport& r) {
  j = nlohmann::json{{"params_before", r.params_before},
                     {"params_after", r.params_after},
                     {"size_mb_before", r.size_mb_before},
                     {"size_mb_after", r.size_mb_after},
                     {"size_reduction_mb", r.size_reduction_mb},
                     {"size_reduction_pct", r.size_reduction_pct},
                     {"macs_before", r.macs_before},
                     {"macs_after", r.macs_after},
                     {"macs_reduction_pct", r.macs_reduction_pct},
                     {"data_rate_before", r.data_rate_before},
                     {"data_rate_after", r.data_rate_after},
                     {"data_rate_reduction_pct", r.data_rate_reduction_pct},
                     {"metric_before", r.metric_before},
                     {"metric_after", r.metric_after},
                     {"performance_reduction", r.performance_reduction}};
}

void to_json(nlohmann::json& j, const RateSelection& s) {
  j = nlohmann::json{{"rates", s.rates}, {"metric", s.metric}};
}

void from_json(const nlohmann::json& j, RateSelection& s) {
  j.at("rates").get_to(s.rates);
  s.metric = j.value("metric", 0.0);
}

} // namespace coss
