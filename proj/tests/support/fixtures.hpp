#pragma once

// Small configurations and datasets for tests.

#include <memory>

#include "coss/data.hpp"
#include "coss/model.hpp"
#include "coss/synth.hpp"
#include "coss/train.hpp"
#include "support/oracles.hpp"

namespace coss::testing {

/// `sensors` sensors named S1.., each with the given rates (the first is f_original).
inline ModelConfig small_config(std::size_t sensors, std::vector<double> rates, std::size_t filters = 4,
                                std::size_t channels = 1, std::uint64_t seed = 1) {
  ModelConfig cfg;
  for (std::size_t i = 0; i < sensors; ++i)
    cfg.sensors.push_back(sensor_config("S" + std::to_string(i + 1), channels, rates));
  cfg.window_seconds = 2;
  cfg.ks_original = 4;
  cfg.filters = filters;
  cfg.classifier_hidden = 6;
  cfg.num_classes = 3;
  cfg.seed = seed;
  return cfg;
}

/// Informative S1, redundant S2, noise S3 at 20 Hz.
inline SynthSpec small_synth(std::size_t windows_per_class = 12, std::size_t classes = 3, std::uint64_t seed = 5) {
  SynthSpec s;
  s.num_classes = classes;
  s.windows_per_class = windows_per_class;
  s.window_seconds = 2;
  s.seed = seed;
  s.sensors = {{"S1", SynthRole::informative, 1, 20, 1, 4, 10, ""},
               {"S2", SynthRole::redundant, 1, 20, 0.5, 1.5, 10, "S1"},
               {"S3", SynthRole::noise, 1, 20, 1, 4, 10, ""}};
  return s;
}

struct Prepared {
  WindowedDataset dataset;
  std::unique_ptr<PreparedData> data;
};

inline Prepared prepare(const SynthSpec& spec, const ModelConfig& cfg, std::uint64_t split_seed = 3) {
  Prepared p;
  p.dataset = synth_generate(spec);
  split_dataset(p.dataset, SplitRatios{}, split_seed);
  normalize(p.dataset);
  p.data = std::make_unique<PreparedData>(p.dataset, cfg);
  return p;
}

} // namespace coss::testing
