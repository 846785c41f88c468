#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace coss {

struct SensorConfig {
  std::string id;
  std::size_t channels = 1;
  double f_original = 0;
  /// Strictly decreasing, each at most f_original.
  std::vector<double> rate_candidates;
};

struct ModelConfig {
  std::vector<SensorConfig> sensors;
  double window_seconds = 0;
  std::size_t ks_original = 0;
  std::size_t filters = 100;
  std::size_t classifier_hidden = 128;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError describing the first inconsistency found.
  void validate() const;
  std::size_t window_length(const SensorConfig& sensor) const;
  std::size_t branch_count() const;
  const SensorConfig& sensor(const std::string& id) const;
};

/// Geometry of one encoder branch derived from the configuration.
struct BranchGeometry {
  double rate = 0;
  double step = 1;
  std::size_t input_length = 0;
  std::size_t kernel = 0;
  /// Temporal length after each of the three convolutions.
  std::size_t conv_length[3] = {0, 0, 0};
};

BranchGeometry branch_geometry(const ModelConfig& cfg, const SensorConfig& sensor, double rate);

/// Shortest round-trip decimal rendering of a rate ("50", "12.5").
std::string format_rate(double hz);

void to_json(nlohmann::json& j, const SensorConfig& s);
void from_json(const nlohmann::json& j, SensorConfig& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

} // namespace coss
