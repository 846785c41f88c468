#include "coss/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "coss/error.hpp"
#include "coss/random.hpp"
#include "coss/resample.hpp"

namespace coss {

SplitResult split_dataset(WindowedDataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  const double r[3] = {ratios.train, ratios.validation, ratios.test};
  for (double v : r)
    if (!(v >= 0)) throw ConfigError("split ratios must be non-negative");
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("split ratios must sum to 1, got {}", r[0] + r[1] + r[2]));
  }
  const std::size_t n = ds.num_windows();
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });

  ds.split.assign(n, Split::train);
  double count[3] = {0, 0, 0};
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t pick = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < 3; ++s) {
      const double deficit = double(p + 1) * r[s] - count[s];
      if (r[s] > 0 && deficit > best + 1e-12) {
        best = deficit;
        pick = s;
      }
    }
    count[pick] += 1;
    ds.split[order[p]] = static_cast<Split>(pick);
  }

  SplitResult out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& bucket = ds.split[i] == Split::train ? out.train : ds.split[i] == Split::validation ? out.validation : out.test;
    bucket.push_back(i);
  }
  std::vector<std::array<std::size_t, 3>> per_class(ds.num_classes(), {0, 0, 0});
  for (std::size_t i = 0; i < n; ++i) ++per_class[std::size_t(ds.labels[i])][std::size_t(ds.split[i])];
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (Split s : {Split::train, Split::validation, Split::test})
      if (r[std::size_t(s)] > 0 && per_class[c][std::size_t(s)] == 0)
        out.warnings.push_back(fmt::format("class {} has no windows in the {} split", ds.class_names[c], to_string(s)));
  return out;
}

void TrainConfig::validate() const {
  sgd.validate();
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch norm needs batch statistics)");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.sgd.learning_rate},
                     {"momentum", c.sgd.momentum},
                     {"weight_decay", c.sgd.weight_decay},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"fine_tune_epochs", c.fine_tune_epochs},
                     {"seed", c.seed},
                     {"metric", to_string(c.metric)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    TrainConfig d;
    c.sgd.learning_rate = j.value("learning_rate", d.sgd.learning_rate);
    c.sgd.momentum = j.value("momentum", d.sgd.momentum);
    c.sgd.weight_decay = j.value("weight_decay", d.sgd.weight_decay);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.fine_tune_epochs = j.value("fine_tune_epochs", d.fine_tune_epochs);
    c.seed = j.value("seed", d.seed);
    c.metric = parse_metric(j.value("metric", std::string(to_string(d.metric))));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("train config: {}", e.what()));
  }
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"val_metric", r.val_metric}};
}

PreparedData::PreparedData(const WindowedDataset& ds, const ModelConfig& cfg)
    : labels_(ds.labels), split_(ds.split), num_classes_(cfg.num_classes) {
  cfg.validate();
  ds.validate();
  if (ds.num_classes() > cfg.num_classes) {
    throw ConfigError(fmt::format("dataset has {} classes but the model predicts {}", ds.num_classes(), cfg.num_classes));
  }
  for (const auto& sc : cfg.sensors) {
    const SensorWindows& sw = ds.sensor(sc.id);
    if (sw.channels != sc.channels || sw.f_original != sc.f_original) {
      throw ConfigError(fmt::format("sensor {}: dataset has {} channels at {} Hz, model expects {} at {} Hz", sc.id,
                                    sw.channels, sw.f_original, sc.channels, sc.f_original));
    }
    if (sw.windows.dim(2) != cfg.window_length(sc)) {
      throw ConfigError(fmt::format("sensor {}: dataset windows have {} samples, model expects {}", sc.id,
                                    sw.windows.dim(2), cfg.window_length(sc)));
    }
    std::vector<Tensor> per_rate;
    for (double rate : sc.rate_candidates) {
      per_rate.push_back(resample::resample_last_axis(sw.windows, resample::step_size(sc.f_original, rate)));
    }
    cache_.push_back(std::move(per_rate));
  }
}

BranchInputs PreparedData::gather(std::span<const std::size_t> windows) const {
  BranchInputs in;
  for (const auto& per_rate : cache_) {
    std::vector<Tensor> batch;
    for (const Tensor& all : per_rate) {
      const std::size_t ch = all.dim(1), len = all.dim(2), stride = ch * len;
      Tensor t({windows.size(), ch, len});
      for (std::size_t i = 0; i < windows.size(); ++i) {
        std::copy_n(all.ptr() + windows[i] * stride, stride, t.ptr() + i * stride);
      }
      batch.push_back(std::move(t));
    }
    in.tensors.push_back(std::move(batch));
  }
  return in;
}

std::vector<int> PreparedData::labels(std::span<const std::size_t> windows) const {
  std::vector<int> out;
  out.reserve(windows.size());
  for (std::size_t i : windows) out.push_back(labels_[i]);
  return out;
}

std::vector<std::size_t> PreparedData::indices(Split which) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split_.size(); ++i)
    if (split_[i] == which) idx.push_back(i);
  return idx;
}

Metrics evaluate(const CossModel& model, const PreparedData& data, std::span<const std::size_t> windows) {
  constexpr std::size_t kChunk = 256;
  std::vector<int> truth, predicted;
  double loss = 0;
  for (std::size_t begin = 0; begin < windows.size(); begin += kChunk) {
    const auto chunk = windows.subspan(begin, std::min(kChunk, windows.size() - begin));
    const Tensor logits = predict(model, data.gather(chunk));
    const Tensor prob = nn::softmax_rows(logits);
    const auto labels = data.labels(chunk);
    const std::size_t classes = logits.dim(1);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const Real* row = logits.ptr() + b * classes;
      predicted.push_back(int(std::max_element(row, row + classes) - row));
      truth.push_back(labels[b]);
      loss -= std::log(std::max(double(prob.at(b, std::size_t(labels[b]))), 1e-300));
    }
  }
  Metrics m = compute_metrics(truth, predicted, data.num_classes());
  m.loss = windows.empty() ? 0.0 : loss / double(windows.size());
  return m;
}

Metrics evaluate(const CossModel& model, const PreparedData& data, Split split) {
  const auto idx = data.indices(split);
  return evaluate(model, data, idx);
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batches.emplace_back(order.begin() + std::ptrdiff_t(begin), order.begin() + std::ptrdiff_t(end));
  }
  // Batch norm cannot train on a single window; fold it into the previous batch.
  if (batches.size() > 1 && batches.back().size() < 2) {
    auto last = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), last.begin(), last.end());
  }
  return batches;
}

double run_epoch(CossModel& model, const PreparedData& data, const TrainConfig& cfg, std::vector<std::size_t>& order,
                 std::mt19937_64& rng, std::size_t epoch, const StepObserver& observer) {
  std::shuffle(order.begin(), order.end(), rng);
  const auto params = model.parameters(true);
  double total = 0;
  std::size_t seen = 0, step = 0;
  model.set_mode(nn::BnMode::training);
  for (const auto& batch : make_batches(order, cfg.batch_size)) {
    if (batch.size() < 2) throw NumericError("training split needs at least 2 windows");
    const auto labels = data.labels(batch);
    auto loss = nn::cross_entropy(forward(model, data.gather(batch)), labels);
    nn::backward(loss);
    nn::sgd_step(params, cfg.sgd);
    const double l = loss.value()[0];
    total += l * double(batch.size());
    seen += batch.size();
    if (observer) observer(model, StepInfo{epoch, step, l});
    ++step;
  }
  model.set_mode(nn::BnMode::inference);
  return total / double(seen);
}

} // namespace

History train(CossModel& model, const PreparedData& data, const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  auto order = data.indices(Split::train);
  const auto val = data.indices(Split::validation);
  if (order.size() < 2) throw InputError("training split needs at least 2 windows");
  if (val.empty()) throw InputError("validation split is empty");

  nn::reset_momentum(model.parameters(false));
  nn::zero_grads(model.parameters(false));
  std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle"));
  History hist;
  hist.best_val_loss = std::numeric_limits<double>::infinity();
  CossModel best = model;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      rec.train_loss = run_epoch(model, data, cfg, order, rng, epoch, observer);
      const Metrics m = evaluate(model, data, val);
      rec.val_loss = m.loss;
      rec.val_metric = m.get(cfg.metric);
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) throw NumericError("non-finite loss");
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("training diverged in epoch {}: {}", epoch, e.what()));
    }
    hist.epochs.push_back(rec);
    if (rec.val_loss < hist.best_val_loss) {
      hist.best_val_loss = rec.val_loss;
      hist.best_val_metric = rec.val_metric;
      hist.best_epoch = epoch;
      best = model;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  model = std::move(best);
  model.set_mode(nn::BnMode::inference);
  return hist;
}

void fine_tune(CossModel& model, const PreparedData& data, const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  if (cfg.fine_tune_epochs == 0) return;
  auto order = data.indices(Split::train);
  if (order.size() < 2) throw InputError("training split needs at least 2 windows");
  nn::reset_momentum(model.parameters(false));
  nn::zero_grads(model.parameters(false));
  std::mt19937_64 rng(derive_seed(cfg.seed, "fine_tune"));
  for (std::size_t epoch = 1; epoch <= cfg.fine_tune_epochs; ++epoch) {
    try {
      run_epoch(model, data, cfg, order, rng, epoch, observer);
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("fine-tuning diverged in epoch {}: {}", epoch, e.what()));
    }
  }
  model.set_mode(nn::BnMode::inference);
}

} // namespace coss
