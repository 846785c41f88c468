#include "coss/config.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "coss/error.hpp"
#include "coss/resample.hpp"

namespace coss {

std::string format_rate(double hz) { return fmt::format("{}", hz); }

std::size_t ModelConfig::window_length(const SensorConfig& sensor) const {
  return std::size_t(std::llround(window_seconds * sensor.f_original));
}

std::size_t ModelConfig::branch_count() const {
  std::size_t n = 0;
  for (const auto& s : sensors) n += s.rate_candidates.size();
  return n;
}

const SensorConfig& ModelConfig::sensor(const std::string& id) const {
  for (const auto& s : sensors)
    if (s.id == id) return s;
  throw InputError(fmt::format("unknown sensor '{}'", id));
}

BranchGeometry branch_geometry(const ModelConfig& cfg, const SensorConfig& sensor, double rate) {
  BranchGeometry g;
  g.rate = rate;
  const auto plan = resample::ResamplePlan::make(sensor.f_original, rate, cfg.window_length(sensor));
  g.step = plan.step;
  g.input_length = plan.target_len;
  g.kernel = resample::adaptive_kernel(cfg.ks_original, sensor.f_original, rate);
  std::size_t len = g.input_length;
  for (auto& out : g.conv_length) {
    if (len < g.kernel) {
      throw ConfigError(fmt::format("sensor {} at {} Hz: {} samples cannot pass three convolutions of kernel {}",
                                    sensor.id, format_rate(rate), g.input_length, g.kernel));
    }
    len = len - g.kernel + 1;
    out = len;
  }
  return g;
}

void ModelConfig::validate() const {
  if (sensors.empty()) throw ConfigError("model needs at least one sensor");
  if (!(window_seconds > 0) || !std::isfinite(window_seconds)) {
    throw ConfigError(fmt::format("window_seconds must be positive, got {}", window_seconds));
  }
  if (ks_original < 1) throw ConfigError("ks_original must be at least 1");
  if (filters < 1) throw ConfigError("filters must be at least 1");
  if (classifier_hidden < 1) throw ConfigError("classifier_hidden must be at least 1");
  if (num_classes < 2) throw ConfigError(fmt::format("num_classes must be at least 2, got {}", num_classes));
  std::set<std::string> ids;
  for (const auto& s : sensors) {
    if (s.id.empty()) throw ConfigError("sensor id must not be empty");
    if (!ids.insert(s.id).second) throw ConfigError(fmt::format("duplicate sensor id '{}'", s.id));
    if (s.channels < 1) throw ConfigError(fmt::format("sensor {}: channels must be positive", s.id));
    if (!(s.f_original > 0)) throw ConfigError(fmt::format("sensor {}: f_original must be positive", s.id));
    if (s.rate_candidates.empty()) throw ConfigError(fmt::format("sensor {}: no rate candidates", s.id));
    for (std::size_t i = 0; i < s.rate_candidates.size(); ++i) {
      if (i > 0 && !(s.rate_candidates[i] < s.rate_candidates[i - 1])) {
        throw ConfigError(fmt::format("sensor {}: rate candidates must be strictly decreasing", s.id));
      }
      branch_geometry(*this, s, s.rate_candidates[i]);
    }
  }
}

void to_json(nlohmann::json& j, const SensorConfig& s) {
  j = nlohmann::json{{"id", s.id},
                     {"channels", s.channels},
                     {"f_original", s.f_original},
                     {"rate_candidates", s.rate_candidates}};
}

void from_json(const nlohmann::json& j, SensorConfig& s) {
  try {
    j.at("id").get_to(s.id);
    j.at("channels").get_to(s.channels);
    j.at("f_original").get_to(s.f_original);
    j.at("rate_candidates").get_to(s.rate_candidates);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("sensor config: {}", e.what()));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"sensors", c.sensors},
                     {"window_seconds", c.window_seconds},
                     {"ks_original", c.ks_original},
                     {"filters", c.filters},
                     {"classifier_hidden", c.classifier_hidden},
                     {"num_classes", c.num_classes},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  try {
    j.at("sensors").get_to(c.sensors);
    j.at("window_seconds").get_to(c.window_seconds);
    j.at("ks_original").get_to(c.ks_original);
    c.filters = j.value("filters", std::size_t{100});
    c.classifier_hidden = j.value("classifier_hidden", std::size_t{128});
    c.num_classes = j.value("num_classes", std::size_t{0});
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("model config: {}", e.what()));
  }
}

} // namespace coss
