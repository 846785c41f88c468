#include "coss/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "json.hpp"

#include "coss/error.hpp"

namespace coss {

namespace fs = std::filesystem;

const char* to_string(Split split) {
  switch (split) {
  case Split::train: return "train";
  case Split::validation: return "validation";
  case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "val") return Split::validation;
  if (name == "test") return Split::test;
  throw ConfigError(fmt::format("unknown split '{}'", name));
}

std::vector<std::size_t> WindowedDataset::indices(Split which) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == which) idx.push_back(i);
  return idx;
}

const SensorWindows& WindowedDataset::sensor(const std::string& id) const {
  for (const auto& s : sensors)
    if (s.sensor_id == id) return s;
  throw InputError(fmt::format("dataset has no sensor '{}'", id));
}

void WindowedDataset::validate() const {
  if (sensors.empty()) throw InputError("dataset has no sensors");
  for (const auto& s : sensors) {
    if (s.windows.rank() != 3 || s.windows.dim(0) != labels.size() || s.windows.dim(1) != s.channels) {
      throw InputError(fmt::format("sensor {}: windows {} inconsistent with {} labels and {} channels",
                                   s.sensor_id, shape_string(s.windows.shape()), labels.size(), s.channels));
    }
    const auto expect = std::size_t(std::llround(window_seconds * s.f_original));
    if (s.windows.dim(2) != expect) {
      throw InputError(fmt::format("sensor {}: window length {} but {} s at {} Hz is {}", s.sensor_id,
                                   s.windows.dim(2), window_seconds, s.f_original, expect));
    }
  }
  for (int y : labels) {
    if (y < 0 || std::size_t(y) >= num_classes()) {
      throw InputError(fmt::format("label {} outside [0,{})", y, num_classes()));
    }
  }
  if (!split.empty() && split.size() != labels.size()) throw InputError("split assignment has wrong length");
}

WindowedDataset windowize(const ContinuousRecording& rec, double window_seconds, double overlap) {
  if (!(window_seconds > 0)) throw ConfigError("window_seconds must be positive");
  if (!(overlap >= 0 && overlap < 1)) throw ConfigError(fmt::format("overlap must be in [0,1), got {}", overlap));
  if (rec.sensors.empty()) throw InputError("recording has no sensors");
  if (!(rec.label_rate > 0)) throw InputError("label rate must be positive");

  const double stride = window_seconds * (1.0 - overlap);
  struct Stream {
    double rate;
    std::size_t length;
    std::size_t window;
    std::string name;
  };
  std::vector<Stream> streams;
  for (const auto& s : rec.sensors) {
    if (s.samples.rank() != 2) throw InputError(fmt::format("sensor {}: samples must be [channels, time]", s.id));
    if (!(s.f_original > 0)) throw InputError(fmt::format("sensor {}: rate must be positive", s.id));
    streams.push_back({s.f_original, s.samples.dim(1), std::size_t(std::llround(window_seconds * s.f_original)), s.id});
  }
  streams.push_back({rec.label_rate, rec.labels.size(),
                     std::size_t(std::llround(window_seconds * rec.label_rate)), "labels"});
  for (const auto& st : streams) {
    if (st.window < 1) throw ConfigError(fmt::format("{}: window shorter than one sample", st.name));
    if (st.length < st.window) {
      throw InputError(fmt::format("{}: stream of {} samples is shorter than one window of {}", st.name,
                                   st.length, st.window));
    }
  }
  auto start_of = [&](std::size_t k, double rate) { return std::size_t(std::llround(double(k) * stride * rate)); };
  std::size_t count = 0;
  for (;; ++count) {
    bool fits = true;
    for (const auto& st : streams) fits = fits && start_of(count, st.rate) + st.window <= st.length;
    if (!fits) break;
  }

  int max_label = -1;
  for (int y : rec.labels) {
    if (y < 0) throw InputError(fmt::format("negative label {}", y));
    max_label = std::max(max_label, y);
  }

  std::vector<std::size_t> kept;
  std::vector<int> labels;
  const std::size_t label_window = streams.back().window;
  for (std::size_t k = 0; k < count; ++k) {
    std::map<int, std::size_t> counts;
    const std::size_t s0 = start_of(k, rec.label_rate);
    for (std::size_t i = 0; i < label_window; ++i) ++counts[rec.labels[s0 + i]];
    // std::map iterates in label order, so ties go to the smallest label.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    if (2 * best->second < label_window) continue;
    kept.push_back(k);
    labels.push_back(best->first);
  }

  WindowedDataset ds;
  ds.window_seconds = window_seconds;
  ds.labels = std::move(labels);
  ds.class_names = rec.class_names;
  for (int c = int(ds.class_names.size()); c <= max_label; ++c) ds.class_names.push_back(fmt::format("class_{}", c));
  for (std::size_t s = 0; s < rec.sensors.size(); ++s) {
    const auto& src = rec.sensors[s];
    const std::size_t ch = src.samples.dim(0), len = streams[s].window, total = src.samples.dim(1);
    SensorWindows sw{src.id, src.f_original, ch, Tensor({kept.size(), ch, len})};
    for (std::size_t w = 0; w < kept.size(); ++w) {
      const std::size_t s0 = start_of(kept[w], src.f_original);
      for (std::size_t c = 0; c < ch; ++c)
        std::copy_n(src.samples.ptr() + c * total + s0, len, sw.windows.ptr() + (w * ch + c) * len);
    }
    ds.sensors.push_back(std::move(sw));
  }
  return ds;
}

void normalize(WindowedDataset& ds, Real variance_floor) {
  if (ds.split.size() != ds.num_windows()) throw StateError("normalize: dataset has not been split");
  const auto train = ds.indices(Split::train);
  if (train.empty()) throw InputError("normalize: training split is empty");
  ds.normalization.clear();
  for (auto& s : ds.sensors) {
    const std::size_t ch = s.channels, len = s.windows.dim(2), n = s.windows.dim(0);
    ChannelStats st{std::vector<Real>(ch), std::vector<Real>(ch)};
    for (std::size_t c = 0; c < ch; ++c) {
      double sum = 0, sq = 0;
      for (std::size_t w : train)
        for (std::size_t t = 0; t < len; ++t) sum += s.windows.at(w, c, t);
      const double count = double(train.size() * len);
      const double mean = sum / count;
      for (std::size_t w : train)
        for (std::size_t t = 0; t < len; ++t) {
          const double d = s.windows.at(w, c, t) - mean;
          sq += d * d;
        }
      st.mean[c] = Real(mean);
      st.stddev[c] = Real(std::sqrt(std::max(sq / count, double(variance_floor))));
    }
    for (std::size_t w = 0; w < n; ++w)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t t = 0; t < len; ++t) {
          auto& v = s.windows.at(w, c, t);
          v = (v - st.mean[c]) / st.stddev[c];
        }
    ds.normalization.push_back(std::move(st));
  }
}

namespace {

std::vector<std::vector<double>> read_table(const fs::path& file, char delimiter) {
  std::ifstream in(file);
  if (!in) throw InputError(fmt::format("cannot open {}", file.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0, width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t end = delimiter == ' ' ? line.find_first_of(" \t", pos) : line.find(delimiter, pos);
      std::string cell = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      cell = first == std::string::npos ? std::string() : cell.substr(first, last - first + 1);
      if (!(delimiter == ' ' && cell.empty())) {
        double v = 0;
        const auto* b = cell.data();
        const auto* e = cell.data() + cell.size();
        auto [ptr, ec] = std::from_chars(b, e, v);
        if (cell.empty() || ec != std::errc() || ptr != e) {
          throw ParseError(fmt::format("{}:{}: non-numeric cell '{}'", file.string(), line_no, cell));
        }
        row.push_back(v);
      }
      if (end == std::string::npos) break;
      pos = end + 1;
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw ParseError(fmt::format("{}:{}: expected {} columns, got {}", file.string(), line_no, width, row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<int> read_labels(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError(fmt::format("cannot open {}", file.string()));
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    int v = 0;
    const char* b = line.data() + first;
    const char* e = line.data() + last + 1;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || v < 0) {
      throw ParseError(fmt::format("{}:{}: expected a non-negative integer label, got '{}'", file.string(),
                                   line_no, std::string(b, e)));
    }
    labels.push_back(v);
  }
  return labels;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError(fmt::format("cannot open {}", file.string()));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

} // namespace

WindowedDataset load_dataset(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw InputError(fmt::format("cannot open manifest {}", manifest.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", manifest.string(), e.what()));
  }
  const fs::path base = manifest.parent_path();
  ContinuousRecording rec;
  double window_seconds = 0, overlap = 0.5;
  struct Source {
    fs::path file;
    std::size_t rows;
  };
  std::vector<Source> sources;
  try {
    const int version = j.value("schema_version", 1);
    if (version != 1) throw ConfigError(fmt::format("{}: unsupported manifest schema_version {}", manifest.string(), version));
    window_seconds = j.at("window_seconds").get<double>();
    overlap = j.value("overlap", 0.5);
    for (const auto& sj : j.at("sensors")) {
      SensorStream stream;
      stream.id = sj.at("id").get<std::string>();
      stream.f_original = sj.at("f_original").get<double>();
      const std::string delim = sj.value("delimiter", std::string(","));
      if (delim.size() != 1) throw ConfigError(fmt::format("sensor {}: delimiter must be one character", stream.id));
      const fs::path file = base / sj.at("file").get<std::string>();
      const auto rows = read_table(file, delim[0]);
      if (rows.empty()) throw InputError(fmt::format("{}: no samples", file.string()));
      const std::size_t ch = rows[0].size(), len = rows.size();
      if (auto expect = sj.find("channels"); expect != sj.end() && expect->get<std::size_t>() != ch) {
        throw InputError(fmt::format("{}: manifest declares {} channels, file has {}", file.string(),
                                     expect->get<std::size_t>(), ch));
      }
      stream.samples = Tensor({ch, len});
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < ch; ++c) stream.samples.at(c, t) = Real(rows[t][c]);
      sources.push_back({file, len});
      rec.sensors.push_back(std::move(stream));
    }
    const auto& lj = j.at("labels");
    const fs::path label_file = base / lj.at("file").get<std::string>();
    rec.labels = read_labels(label_file);
    rec.label_rate = lj.value("rate", rec.sensors.empty() ? 0.0 : rec.sensors[0].f_original);
    if (auto cn = j.find("class_names"); cn != j.end()) rec.class_names = read_lines(base / cn->get<std::string>());
    const double label_seconds = double(rec.labels.size()) / rec.label_rate;
    for (std::size_t s = 0; s < rec.sensors.size(); ++s) {
      const double expected = label_seconds * rec.sensors[s].f_original;
      if (std::abs(double(sources[s].rows) - expected) >= 1.0) {
        throw InputError(fmt::format("{}: {} samples at {} Hz do not match {} labels at {} Hz in {}",
                                     sources[s].file.string(), sources[s].rows, rec.sensors[s].f_original,
                                     rec.labels.size(), rec.label_rate, label_file.string()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", manifest.string(), e.what()));
  }
  auto ds = windowize(rec, window_seconds, overlap);
  ds.validate();
  return ds;
}

void write_recording(const ContinuousRecording& rec, const fs::path& dir, double window_seconds, double overlap) {
  fs::create_directories(dir);
  nlohmann::json sensors = nlohmann::json::array();
  for (const auto& s : rec.sensors) {
    const std::string file = s.id + ".csv";
    auto out = fmt::output_file((dir / file).string());
    const std::size_t ch = s.samples.dim(0), len = s.samples.dim(1);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        if (c > 0) out.print(",");
        out.print("{:.17g}", double(s.samples.at(c, t)));
      }
      out.print("\n");
    }
    sensors.push_back({{"id", s.id}, {"f_original", s.f_original}, {"file", file}, {"channels", ch}, {"delimiter", ","}});
  }
  {
    auto out = fmt::output_file((dir / "labels.txt").string());
    for (int y : rec.labels) out.print("{}\n", y);
  }
  {
    auto out = fmt::output_file((dir / "classes.txt").string());
    for (const auto& n : rec.class_names) out.print("{}\n", n);
  }
  nlohmann::json manifest{{"schema_version", 1},
                          {"window_seconds", window_seconds},
                          {"overlap", overlap},
                          {"labels", {{"file", "labels.txt"}, {"rate", rec.label_rate}}},
                          {"class_names", "classes.txt"},
                          {"sensors", sensors}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

} // namespace coss
