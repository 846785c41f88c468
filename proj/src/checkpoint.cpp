#include "coss/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "json.hpp"

#include "coss/error.hpp"

namespace coss {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'S', 'S', 'C', 'K', 'P', 'T'};

enum class EntryKind : std::uint8_t { parameter = 0, buffer = 1 };

class Writer {
public:
  template <class T>
  void put(T v) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
  }
  void put_bytes(std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

  void entry(EntryKind kind, const std::string& name, const Shape& shape, std::span<const Real> values) {
    put(static_cast<std::uint8_t>(kind));
    put(static_cast<std::uint32_t>(name.size()));
    put_bytes(name);
    put(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put(static_cast<std::uint64_t>(d));
    for (Real v : values) put(static_cast<double>(v));
  }

  std::vector<std::uint8_t> out;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}

  template <class T>
  T get() {
    need(sizeof(T));
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  bool done() const { return pos == bytes.size(); }

  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

private:
  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw ParseError(fmt::format("checkpoint truncated at byte {}", pos));
  }
};

struct Entry {
  EntryKind kind;
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Parsed {
  nlohmann::json header;
  std::vector<Entry> entries;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw ParseError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ParseError(fmt::format("unsupported checkpoint version {}", version));
  Parsed p;
  const auto header_len = r.get<std::uint64_t>();
  try {
    p.header = nlohmann::json::parse(r.get_string(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("checkpoint header: {}", e.what()));
  }
  while (!r.done()) {
    Entry e;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw ParseError(fmt::format("bad entry kind {} at byte {}", kind, r.pos - 1));
    e.kind = EntryKind(kind);
    e.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) e.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = shape_size(e.shape);
    if (n > (r.bytes.size() - r.pos) / 8) throw ParseError(fmt::format("entry {} overruns the file", e.name));
    e.values.resize(n);
    for (auto& v : e.values) v = r.get<double>();
    p.entries.push_back(std::move(e));
  }
  return p;
}

std::vector<Real> active_entries(const nn::Parameter& alpha, const std::vector<bool>& mask) {
  std::vector<Real> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(alpha.value[i]);
  return out;
}

} // namespace

std::vector<std::uint8_t> serialize_model(const CossModel& model) {
  nlohmann::json header;
  header["model"] = model.config();
  header["mode"] = model.mode() == nn::BnMode::training ? "training" : "inference";
  nlohmann::json active = nlohmann::json::object();
  for (const auto& s : model.sensors()) {
    std::vector<bool> mask = s.active_branches();
    active[s.config.id] = mask;
  }
  header["active"] = active;
  const std::string text = header.dump();

  Writer w;
  w.put_bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.put_bytes(text);

  for (const nn::Parameter* p : model.parameters(true)) {
    if (p == &model.sensor_gate().alpha) {
      const auto v = active_entries(*p, model.active_sensors());
      w.entry(EntryKind::parameter, p->name, {v.size()}, v);
      continue;
    }
    const SensorBlock* owner = nullptr;
    for (const auto& s : model.sensors())
      if (p == &s.rate_gate.alpha) owner = &s;
    if (owner) {
      const auto v = active_entries(*p, owner->active_branches());
      w.entry(EntryKind::parameter, p->name, {v.size()}, v);
      continue;
    }
    w.entry(EntryKind::parameter, p->name, p->value.shape(), p->value.data());
  }
  for (const nn::BatchNorm* bn : model.batch_norms(true)) {
    const std::string prefix = bn->gamma.name.substr(0, bn->gamma.name.rfind('.'));
    w.entry(EntryKind::buffer, prefix + ".running_mean", {bn->channels()}, bn->running_mean);
    w.entry(EntryKind::buffer, prefix + ".running_var", {bn->channels()}, bn->running_var);
  }
  return std::move(w.out);
}

CossModel deserialize_model(std::span<const std::uint8_t> bytes) {
  Parsed parsed = parse(bytes);
  CossModel model = [&] {
    try {
      return CossModel(parsed.header.at("model").get<ModelConfig>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(fmt::format("checkpoint header: {}", e.what()));
    }
  }();

  const auto& active = parsed.header.at("active");
  for (auto& s : model.sensors()) {
    const auto mask = active.at(s.config.id).get<std::vector<bool>>();
    if (mask.size() != s.branches.size()) throw ParseError(fmt::format("checkpoint mask for {} has wrong size", s.config.id));
    bool any = false;
    for (std::size_t j = 0; j < mask.size(); ++j) {
      s.branches[j].active = mask[j];
      any = any || mask[j];
    }
    s.active = any;
  }

  std::map<std::string, const Entry*> by_name;
  for (const auto& e : parsed.entries) {
    if (!by_name.emplace(e.name, &e).second) throw ParseError(fmt::format("duplicate checkpoint entry {}", e.name));
  }
  auto take = [&](const std::string& name, EntryKind kind, std::size_t expected) -> const Entry& {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->kind != kind) throw ParseError(fmt::format("checkpoint lacks {}", name));
    if (it->second->values.size() != expected) {
      throw ParseError(fmt::format("checkpoint entry {} has {} values, expected {}", name, it->second->values.size(),
                                   expected));
    }
    const Entry& e = *it->second;
    by_name.erase(it);
    return e;
  };
  auto fill_gate = [&](nn::Parameter& alpha, const std::vector<bool>& mask) {
    std::size_t n = 0;
    for (bool b : mask) n += b;
    const Entry& e = take(alpha.name, EntryKind::parameter, n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) alpha.value[i] = mask[i] ? Real(e.values[k++]) : Real(0);
  };

  for (nn::Parameter* p : model.parameters(true)) {
    if (p == &model.sensor_gate().alpha) {
      fill_gate(*p, model.active_sensors());
      continue;
    }
    SensorBlock* owner = nullptr;
    for (auto& s : model.sensors())
      if (p == &s.rate_gate.alpha) owner = &s;
    if (owner) {
      fill_gate(*p, owner->active_branches());
      continue;
    }
    const Entry& e = take(p->name, EntryKind::parameter, p->size());
    if (e.shape != p->value.shape()) throw ParseError(fmt::format("checkpoint entry {} has the wrong shape", p->name));
    for (std::size_t i = 0; i < e.values.size(); ++i) p->value[i] = Real(e.values[i]);
  }
  for (nn::BatchNorm* bn : model.batch_norms(true)) {
    const std::string prefix = bn->gamma.name.substr(0, bn->gamma.name.rfind('.'));
    const Entry& mean = take(prefix + ".running_mean", EntryKind::buffer, bn->channels());
    const Entry& var = take(prefix + ".running_var", EntryKind::buffer, bn->channels());
    for (std::size_t c = 0; c < bn->channels(); ++c) {
      bn->running_mean[c] = Real(mean.values[c]);
      bn->running_var[c] = Real(var.values[c]);
    }
  }
  if (!by_name.empty()) throw ParseError(fmt::format("unexpected checkpoint entry {}", by_name.begin()->first));

  const std::string mode = parsed.header.value("mode", "inference");
  model.set_mode(mode == "training" ? nn::BnMode::training : nn::BnMode::inference);
  return model;
}

void save_checkpoint(const CossModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw InputError(fmt::format("failed writing {}", path.string()));
}

CossModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open checkpoint {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

std::size_t checkpoint_parameter_elements(std::span<const std::uint8_t> bytes) {
  std::size_t n = 0;
  for (const auto& e : parse(bytes).entries)
    if (e.kind == EntryKind::parameter) n += e.values.size();
  return n;
}

} // namespace coss
