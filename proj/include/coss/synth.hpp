#pragma once

// Ground-truth synthetic multi-sensor data for verification.
//
// informative: class c is a sinusoid at a class frequency spread evenly over
//              [band_low, band_high], random phase, plus white noise.
// redundant:   moving-average low-pass copy (cutoff band_high) of an
//              informative sensor's noisy signal, plus its own noise.
// noise:       sinusoid at a random frequency in [band_low, band_high],
//              independent of the label, plus white noise.
// snr is the power ratio of a unit-amplitude sinusoid to the added noise.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "coss/data.hpp"

namespace coss {

enum class SynthRole { informative, redundant, noise };

struct SynthSensorSpec {
  std::string id;
  SynthRole role = SynthRole::informative;
  std::size_t channels = 1;
  double f_original = 0;
  double band_low = 0;
  double band_high = 0;
  double snr = 10;
  std::string source; // redundant only
};

struct SynthSpec {
  std::vector<SynthSensorSpec> sensors;
  std::size_t num_classes = 2;
  std::size_t windows_per_class = 100;
  double window_seconds = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

WindowedDataset synth_generate(const SynthSpec& spec);

/// Lays windows end to end as one continuous recording, so that windowize
/// with zero overlap recovers them exactly.
ContinuousRecording concatenate_windows(const WindowedDataset& ds);

void to_json(nlohmann::json& j, const SynthSensorSpec& s);
void from_json(const nlohmann::json& j, SynthSensorSpec& s);
void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

} // namespace coss
