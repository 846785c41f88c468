#include "coss/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"

#include "coss/checkpoint.hpp"
#include "coss/cost.hpp"
#include "coss/error.hpp"
#include "coss/prune.hpp"
#include "coss/random.hpp"
#include "coss/report.hpp"

namespace fs = std::filesystem;

namespace coss {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::config: return kExitConfig;
  case ErrorKind::input:
  case ErrorKind::parse:
  case ErrorKind::shape: return kExitData;
  case ErrorKind::numeric: return kExitNumeric;
  case ErrorKind::state: return kExitState;
  }
  return kExitFailure;
}

// ---- config ---------------------------------------------------------------

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"schema_version", kRunSchemaVersion},
                     {"model", c.model},
                     {"train", c.train},
                     {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}}};
  if (c.synthetic) {
    j["data"] = {{"synthetic", *c.synthetic}};
  } else {
    j["data"] = {{"manifest", c.manifest.string()}};
  }
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  try {
    const int version = j.value("schema_version", kRunSchemaVersion);
    if (version != kRunSchemaVersion) throw ConfigError(fmt::format("unsupported run config schema_version {}", version));
    j.at("model").get_to(c.model);
    c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : TrainConfig{};
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.train = s.value("train", c.split.train);
      c.split.validation = s.value("validation", c.split.validation);
      c.split.test = s.value("test", c.split.test);
    }
    const auto& data = j.at("data");
    if (data.contains("synthetic") == data.contains("manifest")) {
      throw ConfigError("data must name exactly one of \"synthetic\" or \"manifest\"");
    }
    if (data.contains("synthetic")) {
      c.synthetic = data.at("synthetic").get<SynthSpec>();
    } else {
      c.synthetic.reset();
      c.manifest = data.at("manifest").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("run config: {}", e.what()));
  }
}

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw InputError(fmt::format("failed writing {}", path.string()));
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path require(const fs::path& run, const char* name) {
  const fs::path p = run / name;
  if (!fs::exists(p)) {
    throw StateError(fmt::format("{} is missing from {}; run the producing command first", name, run.string()));
  }
  return p;
}

} // namespace

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file {} does not exist", path.string()));
  RunConfig cfg;
  try {
    cfg = read_json(path).get<RunConfig>();
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  if (!cfg.synthetic && cfg.manifest.is_relative()) {
    cfg.manifest = fs::absolute(path).parent_path() / cfg.manifest;
  }
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.synthetic) cfg.synthetic->validate();
  return cfg;
}

RunConfig with_seed(RunConfig cfg, std::uint64_t seed) {
  cfg.model.seed = seed;
  cfg.train.seed = seed;
  return cfg;
}

RunData load_run_data(const RunConfig& cfg) {
  RunData rd;
  rd.dataset = cfg.synthetic ? synth_generate(*cfg.synthetic) : load_dataset(cfg.manifest);
  if (std::abs(rd.dataset.window_seconds - cfg.model.window_seconds) > 1e-9) {
    throw ConfigError(fmt::format("dataset windows are {} s but the model expects {} s", rd.dataset.window_seconds,
                                  cfg.model.window_seconds));
  }
  rd.split_warnings = split_dataset(rd.dataset, cfg.split, derive_seed(cfg.train.seed, "split")).warnings;
  normalize(rd.dataset);
  rd.prepared = std::make_unique<PreparedData>(rd.dataset, cfg.model);
  return rd;
}

// ---- lock -----------------------------------------------------------------

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw StateError(fmt::format("run directory {} is locked by another command (remove {} if stale)", dir.string(),
                                 path_.string()));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- commands ---------------------------------------------------------------

namespace {

struct TrainOutcome {
  Metrics validation, test;
  History history;
};

TrainOutcome train_one(const RunConfig& cfg, const fs::path& dir, std::ostream& out, bool quiet) {
  RunLock lock(dir);
  RunData data = load_run_data(cfg);
  for (const auto& w : data.split_warnings) fmt::print(out, "warning: {}\n", w);

  CossModel model(cfg.model);
  TrainOutcome r;
  r.history = train(model, *data.prepared, cfg.train);
  r.validation = evaluate(model, *data.prepared, Split::validation);
  r.test = evaluate(model, *data.prepared, Split::test);

  write_json(dir / "config.json", cfg);
  save_checkpoint(model, dir / "model.ckpt");
  std::string lines;
  for (const auto& e : r.history.epochs) lines += nlohmann::json(e).dump() + "\n";
  write_text(dir / "history.jsonl", lines);
  write_json(dir / "metrics.json", {{"metric", to_string(cfg.train.metric)},
                                    {"epochs_run", r.history.epochs.size()},
                                    {"best_epoch", r.history.best_epoch},
                                    {"best_val_loss", r.history.best_val_loss},
                                    {"validation", metrics_json(r.validation)},
                                    {"test", metrics_json(r.test)}});
  write_json(dir / "cost.json", cost_snapshot(model));

  if (!quiet) {
    fmt::print(out, "{:>6} {:>11} {:>10} {:>11}\n", "epoch", "train_loss", "val_loss", "val_metric");
    for (const auto& e : r.history.epochs)
      fmt::print(out, "{:>6} {:>11.5f} {:>10.5f} {:>11.4f}\n", e.epoch, e.train_loss, e.val_loss, e.val_metric);
  }
  fmt::print(out, "run {}: best epoch {} of {}, test accuracy {:.4f}, test macro_f1 {:.4f}\n", dir.string(),
             r.history.best_epoch, r.history.epochs.size(), r.test.accuracy, r.test.macro_f1);
  return r;
}

fs::path default_run_dir(const fs::path& config, std::uint64_t seed) {
  const char* root = std::getenv(kRunsRootEnv);
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / fmt::format("{}-seed{}", config.stem().string(), seed);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0};
}

struct LoadedRun {
  RunConfig cfg;
  RunData data;
};

LoadedRun load_run(const fs::path& run) {
  LoadedRun lr;
  lr.cfg = read_json(require(run, "config.json")).get<RunConfig>();
  lr.data = load_run_data(lr.cfg);
  return lr;
}

double metric_of(const nlohmann::json& metrics, Metric m) { return metrics.at(to_string(m)).get<double>(); }

} // namespace

fs::path cmd_train(const TrainCommand& c, std::ostream& out) {
  if (c.repeats < 1) throw ConfigError("--repeats must be at least 1");
  const RunConfig base = load_run_config(c.config);
  const std::uint64_t seed = c.seed.value_or(base.train.seed);
  const fs::path dir = c.out.empty() ? default_run_dir(c.config, seed) : c.out;
  if (c.repeats == 1) {
    train_one(with_seed(base, seed), dir, out, c.quiet);
    return dir;
  }

  RunLock lock(dir);
  std::vector<double> acc, f1;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.repeats; ++i) {
    const std::uint64_t s = seed + i;
    const fs::path sub = dir / fmt::format("run_{:02}", i);
    const auto r = train_one(with_seed(base, s), sub, out, true);
    acc.push_back(r.test.accuracy);
    f1.push_back(r.test.macro_f1);
    runs.push_back({{"dir", sub.filename().string()},
                    {"seed", s},
                    {"best_epoch", r.history.best_epoch},
                    {"test_accuracy", r.test.accuracy},
                    {"test_macro_f1", r.test.macro_f1}});
  }
  const auto [am, as] = mean_std(acc);
  const auto [fm, fsd] = mean_std(f1);
  write_json(dir / "summary.json", {{"repeats", c.repeats},
                                    {"runs", runs},
                                    {"test_accuracy", {{"mean", am}, {"std", as}}},
                                    {"test_macro_f1", {{"mean", fm}, {"std", fsd}}}});
  const std::string table = fmt::format("{} repeats: test accuracy {:.4f} +/- {:.4f}, test macro_f1 {:.4f} +/- {:.4f}\n",
                                        c.repeats, am, as, fm, fsd);
  write_text(dir / "summary.txt", table);
  out << table;
  return dir;
}

void cmd_rank(const fs::path& run, std::ostream& out) {
  RunLock lock(run);
  const CossModel model = load_checkpoint(require(run, "model.ckpt"));
  const auto weights = gate_weights(model);
  const auto sens = rate_sensitivity(model);
  std::string text = render_gate_tables(weights);
  text += "\nRate sensitivity (std of rate scores)\n";
  for (const auto& s : sens) text += fmt::format("  {:<12} {:.4f}\n", s.sensor_id, s.std_dev);
  out << text;
  write_json(run / "rank.json",
             {{"ranking", rank_sensors(model)}, {"gate_weights", gate_weights_json(weights)}, {"rate_sensitivity", sens}});
}

void cmd_prune(const PruneCommand& c, std::ostream& out) {
  if (c.keep && c.max_drop) throw ConfigError("--keep and --max-drop are mutually exclusive");
  RunLock lock(c.run);
  LoadedRun lr = load_run(c.run);
  const PreparedData& data = *lr.data.prepared;
  const CossModel model = load_checkpoint(require(c.run, "model.ckpt"));
  const Metric metric = lr.cfg.train.metric;

  PruneOptions opts;
  opts.metric = metric;
  opts.split = Split::validation;
  const PruneCurve curve = progressive_prune(model, data, opts);
  const std::size_t sensors = model.active_sensor_indices().size();
  std::size_t count = 0;
  if (c.keep) {
    if (*c.keep < 1 || *c.keep > sensors) throw ConfigError(fmt::format("--keep must be in [1, {}]", sensors));
    count = sensors - *c.keep;
  } else {
    count = threshold_count(curve, c.max_drop.value_or(2.0));
  }

  CossModel pruned = apply_pruning(model, curve, count);
  const double test_before = evaluate(model, data, Split::test).get(metric);
  const double test_after = evaluate(pruned, data, Split::test).get(metric);
  std::optional<double> test_ft;
  if (c.finetune && count > 0) {
    fine_tune(pruned, data, lr.cfg.train);
    test_ft = evaluate(pruned, data, Split::test).get(metric);
  }
  save_checkpoint(pruned, c.run / "pruned.ckpt");

  const auto before = cost_snapshot(model), after = cost_snapshot(pruned);
  nlohmann::json j{{"curve", curve},
                   {"rule", c.keep ? "keep" : "max_drop"},
                   {"keep", c.keep ? nlohmann::json(*c.keep) : nlohmann::json(nullptr)},
                   {"max_drop", c.keep ? nlohmann::json(nullptr) : nlohmann::json(c.max_drop.value_or(2.0))},
                   {"finetune", c.finetune},
                   {"pruned_sensors", pruned_sensors(curve, count)},
                   {"test_metric_before", test_before},
                   {"test_metric_after", test_after},
                   {"test_metric_finetuned", test_ft ? nlohmann::json(*test_ft) : nlohmann::json(nullptr)},
                   {"cost_before", before},
                   {"cost_after", after}};
  write_json(c.run / "prune.json", j);

  out << render_prune_curve(curve, metric);
  const auto ids = pruned_sensors(curve, count);
  std::string list;
  for (const auto& id : ids) list += (list.empty() ? "" : ",") + id;
  fmt::print(out, "\npruned {} sensor(s): {}\n", count, list.empty() ? "-" : list);
  fmt::print(out, "test {}: {:.4f} -> {:.4f}", to_string(metric), test_before, test_after);
  if (test_ft) fmt::print(out, " -> {:.4f} after fine-tuning", *test_ft);
  fmt::print(out, "\nparams {} -> {}, macs/window {} -> {}\n", before.params, after.params, before.macs_per_window,
             after.macs_per_window);
}

void cmd_select_rates(const SelectRatesCommand& c, std::ostream& out) {
  RunLock lock(c.run);
  LoadedRun lr = load_run(c.run);
  const PreparedData& data = *lr.data.prepared;
  const bool from_pruned = fs::exists(c.run / "pruned.ckpt");
  const CossModel model = load_checkpoint(from_pruned ? c.run / "pruned.ckpt" : require(c.run, "model.ckpt"));
  const Metric metric = lr.cfg.train.metric;

  const auto result = select_rates(model, data, c.max_drop, Split::validation, metric);
  const auto probes = probe_rates(model, data, Split::validation, metric);
  CossModel selected = apply_rates(model, result.selection);
  const double test_before = evaluate(model, data, Split::test).get(metric);
  const double test_after = evaluate(selected, data, Split::test).get(metric);
  std::optional<double> test_ft;
  if (c.finetune) {
    fine_tune(selected, data, lr.cfg.train);
    test_ft = evaluate(selected, data, Split::test).get(metric);
  }
  save_checkpoint(selected, c.run / "selected.ckpt");

  write_json(c.run / "rates.json",
             {{"source", from_pruned ? "pruned.ckpt" : "model.ckpt"},
              {"max_drop", c.max_drop},
              {"finetune", c.finetune},
              {"result", result},
              {"probes", probes},
              {"rate_sensitivity", rate_sensitivity(model)},
              {"test_metric_before", test_before},
              {"test_metric_after", test_after},
              {"test_metric_finetuned", test_ft ? nlohmann::json(*test_ft) : nlohmann::json(nullptr)},
              {"cost_before", cost_snapshot(model)},
              {"cost_after", cost_snapshot(selected)}});

  out << render_rate_selection(result, probes, metric);
  fmt::print(out, "test {}: {:.4f} -> {:.4f}", to_string(metric), test_before, test_after);
  if (test_ft) fmt::print(out, " -> {:.4f} after fine-tuning", *test_ft);
  fmt::print(out, "\n");
}

void cmd_evaluate(const EvaluateCommand& c, std::ostream& out) {
  RunLock lock(c.run);
  std::string name = c.checkpoint;
  if (name.empty()) {
    for (const char* cand : {"selected", "pruned", "model"})
      if (fs::exists(c.run / (std::string(cand) + ".ckpt"))) {
        name = cand;
        break;
      }
    if (name.empty()) name = "model";
  }
  if (name != "model" && name != "pruned" && name != "selected") {
    throw ConfigError(fmt::format("unknown checkpoint '{}' (model, pruned or selected)", name));
  }
  LoadedRun lr = load_run(c.run);
  const std::string file = name + ".ckpt";
  const CossModel model = load_checkpoint(require(c.run, file.c_str()));
  const Metrics m = evaluate(model, *lr.data.prepared, c.split);
  out << render_metrics(m, fmt::format("{} on the {} split", file, to_string(c.split)));
  auto j = metrics_json(m);
  j["checkpoint"] = file;
  j["split"] = to_string(c.split);
  write_json(c.run / fmt::format("eval_{}_{}.json", name, to_string(c.split)), j);
}

void cmd_report(const fs::path& run, std::ostream& out) {
  RunLock lock(run);
  const RunConfig cfg = read_json(require(run, "config.json")).get<RunConfig>();
  const Metric metric = cfg.train.metric;
  const auto metrics = read_json(require(run, "metrics.json"));
  const CossModel base = load_checkpoint(require(run, "model.ckpt"));

  Summary s;
  s.metric = to_string(metric);
  const double baseline = metric_of(metrics.at("test"), metric);
  double final_metric = baseline;
  fs::path final_ckpt = run / "model.ckpt";

  if (fs::exists(run / "prune.json")) {
    const auto p = read_json(run / "prune.json");
    s.pruned_sensors = p.at("pruned_sensors").get<std::vector<std::string>>();
    const auto& ft = p.at("test_metric_finetuned");
    final_metric = ft.is_null() ? p.at("test_metric_after").get<double>() : ft.get<double>();
    final_ckpt = require(run, "pruned.ckpt");
  }
  if (fs::exists(run / "rates.json")) {
    const auto r = read_json(run / "rates.json");
    s.selected_rates = r.at("result").at("selection").at("rates").get<std::map<std::string, double>>();
    const auto& ft = r.at("test_metric_finetuned");
    final_metric = ft.is_null() ? r.at("test_metric_after").get<double>() : ft.get<double>();
    final_ckpt = require(run, "selected.ckpt");
  }
  for (const auto& sc : cfg.model.sensors) s.rate_order.push_back(sc.id);

  const CossModel final_model = load_checkpoint(final_ckpt);
  s.reduction = reduction_report(cost_snapshot(base), cost_snapshot(final_model), baseline, final_metric);
  s.performance_reduction = s.reduction.performance_reduction;

  const std::string text = render_summary(s);
  out << text;
  write_text(run / "report.txt", text);
  write_json(run / "report.json", s);
}

void cmd_synth(const SynthCommand& c, std::ostream& out) {
  SynthSpec spec = read_json(c.spec).get<SynthSpec>();
  spec.validate();
  if (c.overlap < 0 || c.overlap >= 1) throw ConfigError("--overlap must be in [0, 1)");
  const WindowedDataset ds = synth_generate(spec);
  RunLock lock(c.out);
  write_recording(concatenate_windows(ds), c.out, spec.window_seconds, c.overlap);
  fmt::print(out, "wrote {} windows of {} sensors to {}\n", ds.num_windows(), ds.sensors.size(),
             (c.out / "manifest.json").string());
}

// ---- command line -------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensor and sampling-rate selection with a gated multi-branch CNN"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "coss 1.0");

  TrainCommand train_cmd;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "Train a model and write a run directory");
  train->add_option("--config", train_cmd.config, "Run config JSON")->required();
  auto* seed_opt = train->add_option("--seed", seed, "Seed for split, initialization and shuffling");
  train->add_option("--out", train_cmd.out, fmt::format("Run directory (default ${}/<config>-seed<N>)", kRunsRootEnv));
  train->add_option("--repeats", train_cmd.repeats, "Independent runs with seeds seed, seed+1, ...")->check(CLI::PositiveNumber);
  train->add_flag("--quiet", train_cmd.quiet, "Only print the final line");

  fs::path run;
  auto* rank = app.add_subcommand("rank", "Print sensor and sampling-rate weight scores");
  rank->add_option("run", run, "Run directory")->required();

  PruneCommand prune_cmd;
  std::size_t keep = 0;
  double prune_drop = 2.0;
  auto* prune = app.add_subcommand("prune", "Progressively prune low-scored sensors");
  prune->add_option("run", prune_cmd.run, "Run directory")->required();
  auto* keep_opt = prune->add_option("--keep", keep, "Number of sensors to keep");
  auto* drop_opt = prune->add_option("--max-drop", prune_drop, "Largest allowed validation drop in points (default 2)");
  keep_opt->excludes(drop_opt);
  prune->add_flag("--finetune", prune_cmd.finetune, "Fine-tune the pruned model");

  SelectRatesCommand rates_cmd;
  auto* rates = app.add_subcommand("select-rates", "Choose one sampling rate per surviving sensor");
  rates->add_option("run", rates_cmd.run, "Run directory")->required();
  rates->add_option("--max-drop", rates_cmd.max_drop, "Largest allowed validation drop in points");
  rates->add_flag("--finetune", rates_cmd.finetune, "Fine-tune the rate-selected model");

  EvaluateCommand eval_cmd;
  std::string split_name = "test";
  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint of a run");
  eval->add_option("run", eval_cmd.run, "Run directory")->required();
  eval->add_option("--split", split_name, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  eval->add_option("--checkpoint", eval_cmd.checkpoint, "model, pruned or selected (default: latest)");

  auto* report = app.add_subcommand("report", "Summarize pruning and rate selection of a run");
  report->add_option("run", run, "Run directory")->required();

  SynthCommand synth_cmd;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset in the manifest layout");
  synth->add_option("--spec", synth_cmd.spec, "Synthetic spec JSON")->required();
  synth->add_option("--out", synth_cmd.out, "Output directory")->required();
  synth->add_option("--overlap", synth_cmd.overlap, "Window overlap recorded in the manifest");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) {
      if (seed_opt->count()) train_cmd.seed = seed;
      cmd_train(train_cmd, out);
    } else if (rank->parsed()) {
      cmd_rank(run, out);
    } else if (prune->parsed()) {
      if (keep_opt->count()) prune_cmd.keep = keep;
      if (drop_opt->count()) prune_cmd.max_drop = prune_drop;
      cmd_prune(prune_cmd, out);
    } else if (rates->parsed()) {
      cmd_select_rates(rates_cmd, out);
    } else if (eval->parsed()) {
      eval_cmd.split = parse_split(split_name);
      cmd_evaluate(eval_cmd, out);
    } else if (report->parsed()) {
      cmd_report(run, out);
    } else if (synth->parsed()) {
      cmd_synth(synth_cmd, out);
    }
  } catch (const Error& e) {
    fmt::print(err, "error ({}): {}\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

} // namespace coss
