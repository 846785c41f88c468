#pragma once

// Windowed multi-sensor datasets: windowing of continuous recordings,
// train-split normalization, and loading from a manifest of delimited text files.
//
// Manifest (JSON, schema_version 1):
//   {
//     "schema_version": 1,
//     "window_seconds": 4.0,
//     "overlap": 0.5,                    // optional, default 0.5
//     "labels": {"file": "labels.txt", "rate": 50},
//     "class_names": "classes.txt",      // optional, one name per line
//     "sensors": [
//       {"id": "S1", "f_original": 50, "file": "s1.csv", "delimiter": ","}
//     ]
//   }
// Paths are relative to the manifest. A sensor file has one row per time step
// and one column per channel; the label file has one integer class per row.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coss/tensor.hpp"

namespace coss {

enum class Split : std::uint8_t { train, validation, test };

const char* to_string(Split split);
Split parse_split(const std::string& name);

struct SensorWindows {
  std::string sensor_id;
  double f_original = 0;
  std::size_t channels = 0;
  Tensor windows; // [num_windows, channels, window_len]
};

struct ChannelStats {
  std::vector<Real> mean;
  std::vector<Real> stddev;
};

struct WindowedDataset {
  std::vector<SensorWindows> sensors;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<Split> split;               // empty until split_dataset runs
  std::vector<ChannelStats> normalization; // per sensor, filled by normalize()
  double window_seconds = 0;

  std::size_t num_windows() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::vector<std::size_t> indices(Split which) const;
  const SensorWindows& sensor(const std::string& id) const;
  /// Throws InputError on inconsistent shapes or labels.
  void validate() const;
};

struct SensorStream {
  std::string id;
  double f_original = 0;
  Tensor samples; // [channels, time]
};

struct ContinuousRecording {
  std::vector<SensorStream> sensors;
  std::vector<int> labels; // one per step at label_rate
  double label_rate = 0;
  std::vector<std::string> class_names;
};

/// Cuts time-aligned streams into fixed windows. Window k starts at
/// round(k * stride * f) samples for each stream, stride = window * (1 - overlap).
/// A window takes the most frequent label it covers and is dropped when that
/// label covers less than half of it.
WindowedDataset windowize(const ContinuousRecording& rec, double window_seconds, double overlap);

/// Per-channel z-score with statistics from the training split, applied to all splits.
void normalize(WindowedDataset& ds, Real variance_floor = Real(1e-12));

/// Parses a manifest and the files it names, then windowizes.
WindowedDataset load_dataset(const std::filesystem::path& manifest);

/// Writes a recording in the manifest layout; the inverse of load_dataset's parsing.
void write_recording(const ContinuousRecording& rec, const std::filesystem::path& dir,
                     double window_seconds, double overlap);

} // namespace coss
