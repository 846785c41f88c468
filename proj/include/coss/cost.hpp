#pragma once

// Hardware cost accounting over the active part of a model.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "coss/model.hpp"

namespace coss {

/// Bytes per stored parameter used for the size figures (32-bit deployment).
inline constexpr std::size_t kDeployBytesPerParam = 4;

/// Chosen sampling rate per sensor.
struct RateSelection {
  std::map<std::string, double> rates;
  double metric = 0;
};

struct BranchCost {
  std::string sensor_id;
  double rate = 0;
  std::size_t kernel = 0;
  std::size_t params = 0;
  std::uint64_t macs = 0;
};

struct CostSnapshot {
  std::size_t params = 0;
  std::size_t bytes = 0;     // params * kDeployBytesPerParam
  std::size_t bytes_f64 = 0; // params * 8
  std::uint64_t macs_per_window = 0;
  double data_rate = 0; // samples/s over active sensors
  std::size_t gate_params = 0;
  std::size_t classifier_params = 0;
  std::uint64_t classifier_macs = 0;
  std::vector<BranchCost> branches; // active branches only

  double megabytes() const { return double(bytes) / (1024.0 * 1024.0); }
};

std::size_t conv_param_count(std::size_t in, std::size_t out, std::size_t kernel);
std::size_t dense_param_count(std::size_t in, std::size_t out);
std::size_t batch_norm_param_count(std::size_t channels);
std::uint64_t conv_macs(std::size_t in, std::size_t out, std::size_t kernel, std::size_t out_len);

std::size_t param_count(const CossModel& model);
std::uint64_t macs_per_window(const CossModel& model);
/// channels * Hz summed over the selection.
double data_rate(const RateSelection& selection, const std::vector<SensorConfig>& sensors);
/// Each active sensor must be sampled at its fastest active branch rate.
double data_rate(const CossModel& model);
CostSnapshot cost_snapshot(const CossModel& model);

struct ReductionReport {
  std::size_t params_before = 0, params_after = 0;
  double size_mb_before = 0, size_mb_after = 0;
  double size_reduction_mb = 0, size_reduction_pct = 0;
  std::uint64_t macs_before = 0, macs_after = 0;
  double macs_reduction_pct = 0;
  double data_rate_before = 0, data_rate_after = 0;
  double data_rate_reduction_pct = 0;
  double metric_before = 0, metric_after = 0;
  /// Percentage points, 100 * (before - after).
  double performance_reduction = 0;
};

ReductionReport reduction_report(const CostSnapshot& before, const CostSnapshot& after, double metric_before,
                                 double metric_after);

/// "reduced/original (pct%)" in MB, e.g. "3.51/5.66 (62%)".
std::string format_size_reduction(const ReductionReport& r);

void to_json(nlohmann::json& j, const BranchCost& b);
void to_json(nlohmann::json& j, const CostSnapshot& c);
void to_json(nlohmann::json& j, const ReductionReport& r);
void to_json(nlohmann::json& j, const RateSelection& s);
void from_json(const nlohmann::json& j, RateSelection& s);

} // namespace coss
