#include "coss/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <fmt/format.h>

#include "coss/error.hpp"
#include "coss/random.hpp"

namespace coss {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const char* role_name(SynthRole r) {
  switch (r) {
  case SynthRole::informative: return "informative";
  case SynthRole::redundant: return "redundant";
  case SynthRole::noise: return "noise";
  }
  return "?";
}

SynthRole parse_role(const std::string& s) {
  if (s == "informative") return SynthRole::informative;
  if (s == "redundant") return SynthRole::redundant;
  if (s == "noise") return SynthRole::noise;
  throw ConfigError(fmt::format("unknown synthetic sensor role '{}'", s));
}

const SynthSensorSpec* find(const SynthSpec& spec, const std::string& id) {
  for (const auto& s : spec.sensors)
    if (s.id == id) return &s;
  return nullptr;
}

std::size_t window_samples(double seconds, double rate) { return std::size_t(std::llround(seconds * rate)); }

std::size_t smoothing_length(const SynthSensorSpec& s) {
  return std::max<std::size_t>(1, std::size_t(std::llround(s.f_original / s.band_high)));
}

} // namespace

void SynthSpec::validate() const {
  if (sensors.empty()) throw ConfigError("synthetic spec has no sensors");
  if (num_classes < 2) throw ConfigError("synthetic spec needs at least 2 classes");
  if (windows_per_class < 1) throw ConfigError("windows_per_class must be positive");
  if (!(window_seconds > 0)) throw ConfigError("window_seconds must be positive");
  std::set<std::string> ids;
  bool any_informative = false;
  for (const auto& s : sensors) {
    if (!ids.insert(s.id).second) throw ConfigError(fmt::format("duplicate synthetic sensor '{}'", s.id));
    if (s.channels < 1) throw ConfigError(fmt::format("sensor {}: channels must be positive", s.id));
    if (!(s.f_original > 0)) throw ConfigError(fmt::format("sensor {}: f_original must be positive", s.id));
    if (!(s.snr > 0)) throw ConfigError(fmt::format("sensor {}: snr must be positive", s.id));
    const double w = window_seconds * s.f_original;
    if (std::abs(w - std::round(w)) > 1e-9 || w < 2) {
      throw ConfigError(fmt::format("sensor {}: window of {} s is not a whole number of samples at {} Hz", s.id,
                                    window_seconds, s.f_original));
    }
    if (!(s.band_low >= 0 && s.band_high >= s.band_low && s.band_high > 0)) {
      throw ConfigError(fmt::format("sensor {}: invalid band [{}, {}]", s.id, s.band_low, s.band_high));
    }
    if (s.band_high > s.f_original / 2) {
      throw ConfigError(fmt::format("sensor {}: band edge {} Hz exceeds the Nyquist rate of {} Hz", s.id,
                                    s.band_high, s.f_original / 2));
    }
    any_informative = any_informative || s.role == SynthRole::informative;
    if (s.role == SynthRole::redundant) {
      const auto* src = find(*this, s.source);
      if (!src || src->role != SynthRole::informative) {
        throw ConfigError(fmt::format("sensor {}: source '{}' is not an informative sensor", s.id, s.source));
      }
      if (src->f_original != s.f_original || src->channels < s.channels) {
        throw ConfigError(fmt::format("sensor {}: source {} must share its rate and have at least as many channels",
                                      s.id, s.source));
      }
    }
  }
  if (!any_informative) throw ConfigError("synthetic spec needs an informative sensor");
}

WindowedDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_classes * spec.windows_per_class;
  WindowedDataset ds;
  ds.window_seconds = spec.window_seconds;
  for (std::size_t c = 0; c < spec.num_classes; ++c) ds.class_names.push_back(fmt::format("class_{}", c));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = int(i % spec.num_classes);

  // Noisy informative signals over a padded interval, kept for redundant copies.
  struct Extended {
    std::size_t pad = 0;
    std::vector<double> data; // [window][channel][pad + len + pad]
  };
  std::vector<Extended> extended(spec.sensors.size());
  std::size_t max_pad = 0;
  for (const auto& s : spec.sensors)
    if (s.role == SynthRole::redundant) max_pad = std::max(max_pad, smoothing_length(s));

  auto noise_sigma = [](const SynthSensorSpec& s) { return std::sqrt(0.5 / s.snr); };

  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t si = 0; si < spec.sensors.size(); ++si) {
      const auto& s = spec.sensors[si];
      const bool informative = s.role == SynthRole::informative;
      if ((pass == 0) != informative) continue;
      std::mt19937_64 rng(derive_seed(spec.seed, "synth/" + s.id));
      std::normal_distribution<double> gauss(0.0, noise_sigma(s));
      const std::size_t len = window_samples(spec.window_seconds, s.f_original);
      SensorWindows sw{s.id, s.f_original, s.channels, Tensor({n, s.channels, len})};
      Extended& ext = extended[si];
      if (informative) {
        ext.pad = max_pad;
        ext.data.assign(n * s.channels * (len + 2 * max_pad), 0.0);
      }
      for (std::size_t w = 0; w < n; ++w) {
        const int label = ds.labels[w];
        double freq = 0;
        if (s.role == SynthRole::informative) {
          const double frac = spec.num_classes > 1 ? double(label) / double(spec.num_classes - 1) : 0.0;
          freq = (s.band_low + (s.band_high - s.band_low) * frac) * uniform(rng, 0.98, 1.02);
        } else if (s.role == SynthRole::noise) {
          freq = uniform(rng, s.band_low, s.band_high);
        }
        const double phase = uniform(rng, 0.0, kTwoPi);
        const double amp = uniform(rng, 0.9, 1.1);
        for (std::size_t c = 0; c < s.channels; ++c) {
          const double offset = double(c) * std::numbers::pi / 3.0;
          if (informative) {
            const std::size_t ext_len = len + 2 * ext.pad;
            double* e = ext.data.data() + (w * s.channels + c) * ext_len;
            for (std::size_t t = 0; t < ext_len; ++t) {
              const double time = (double(t) - double(ext.pad)) / s.f_original;
              e[t] = amp * std::sin(kTwoPi * freq * time + phase + offset) + gauss(rng);
            }
            for (std::size_t t = 0; t < len; ++t) sw.windows.at(w, c, t) = Real(e[t + ext.pad]);
          } else if (s.role == SynthRole::noise) {
            for (std::size_t t = 0; t < len; ++t) {
              const double time = double(t) / s.f_original;
              sw.windows.at(w, c, t) = Real(amp * std::sin(kTwoPi * freq * time + phase + offset) + gauss(rng));
            }
          } else {
            std::size_t src_index = 0;
            while (spec.sensors[src_index].id != s.source) ++src_index;
            const Extended& src = extended[src_index];
            const std::size_t src_ch = spec.sensors[src_index].channels;
            const std::size_t ext_len = len + 2 * src.pad;
            const double* e = src.data.data() + (w * src_ch + c) * ext_len;
            const std::size_t m = smoothing_length(s);
            const std::size_t half = m / 2;
            for (std::size_t t = 0; t < len; ++t) {
              double acc = 0;
              const std::size_t center = t + src.pad;
              for (std::size_t k = 0; k < m; ++k) acc += e[center - half + k];
              sw.windows.at(w, c, t) = Real(acc / double(m) + gauss(rng));
            }
          }
        }
      }
      if (ds.sensors.size() <= si) ds.sensors.resize(spec.sensors.size());
      ds.sensors[si] = std::move(sw);
    }
  }
  ds.validate();
  return ds;
}

ContinuousRecording concatenate_windows(const WindowedDataset& ds) {
  ds.validate();
  ContinuousRecording rec;
  rec.class_names = ds.class_names;
  const std::size_t n = ds.num_windows();
  for (const auto& s : ds.sensors) {
    const std::size_t ch = s.channels, len = s.windows.dim(2);
    SensorStream stream{s.sensor_id, s.f_original, Tensor({ch, n * len})};
    for (std::size_t w = 0; w < n; ++w)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t t = 0; t < len; ++t) stream.samples.at(c, w * len + t) = s.windows.at(w, c, t);
    rec.sensors.push_back(std::move(stream));
  }
  rec.label_rate = ds.sensors.front().f_original;
  const std::size_t label_len = ds.sensors.front().windows.dim(2);
  for (std::size_t w = 0; w < n; ++w) rec.labels.insert(rec.labels.end(), label_len, ds.labels[w]);
  return rec;
}

void to_json(nlohmann::json& j, const SynthSensorSpec& s) {
  j = nlohmann::json{{"id", s.id},
                     {"role", role_name(s.role)},
                     {"channels", s.channels},
                     {"f_original", s.f_original},
                     {"band", {s.band_low, s.band_high}},
                     {"snr", s.snr}};
  if (!s.source.empty()) j["source"] = s.source;
}

void from_json(const nlohmann::json& j, SynthSensorSpec& s) {
  try {
    s.id = j.at("id").get<std::string>();
    s.role = parse_role(j.at("role").get<std::string>());
    s.channels = j.value("channels", std::size_t{1});
    s.f_original = j.at("f_original").get<double>();
    const auto band = j.at("band").get<std::vector<double>>();
    if (band.size() != 2) throw ConfigError(fmt::format("sensor {}: band must be [low, high]", s.id));
    s.band_low = band[0];
    s.band_high = band[1];
    s.snr = j.value("snr", 10.0);
    s.source = j.value("source", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("synthetic sensor: {}", e.what()));
  }
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"sensors", s.sensors},
                     {"num_classes", s.num_classes},
                     {"windows_per_class", s.windows_per_class},
                     {"window_seconds", s.window_seconds},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  try {
    j.at("sensors").get_to(s.sensors);
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.windows_per_class = j.at("windows_per_class").get<std::size_t>();
    s.window_seconds = j.at("window_seconds").get<double>();
    s.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("synthetic spec: {}", e.what()));
  }
}

} // namespace coss
