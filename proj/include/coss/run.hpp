#pragma once

// Run configuration, run-directory artifacts and the command implementations
// behind the `coss` tool.
//
// Run config (JSON, schema_version 1):
//   {
//     "schema_version": 1,
//     "model": { ModelConfig },
//     "train": { TrainConfig },                          // optional fields
//     "split": {"train": 0.7, "validation": 0.15, "test": 0.15},  // optional
//     "data":  {"synthetic": { SynthSpec }}  or  {"manifest": "path.json"}
//   }
// A manifest path is relative to the config file. The run seed (--seed, else
// train.seed) replaces model.seed and train.seed and keys the split.
//
// Run directory:
//   config.json    resolved config        model.ckpt     trained model
//   history.jsonl  one record per epoch   metrics.json   validation/test metrics
//   cost.json      cost of the model      rank.json      gate scores
//   prune.json     pruning curve/result   pruned.ckpt
//   rates.json     rate selection         selected.ckpt
//   report.txt/json  result summary       .lock          held while a command runs

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "coss/config.hpp"
#include "coss/data.hpp"
#include "coss/error.hpp"
#include "coss/synth.hpp"
#include "coss/train.hpp"

namespace coss {

inline constexpr int kRunSchemaVersion = 1;

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1, // unexpected error
  kExitUsage = 2,   // bad command line
  kExitConfig = 3,
  kExitData = 4, // input, parse or shape errors
  kExitNumeric = 5,
  kExitState = 6, // e.g. locked run directory, missing artifact
};

int exit_code(ErrorKind kind) noexcept;

/// Environment variable naming the default root for new run directories.
inline constexpr const char* kRunsRootEnv = "COSS_RUNS_DIR";

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SplitRatios split;
  std::optional<SynthSpec> synthetic;
  std::filesystem::path manifest; // absolute once loaded
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Relative manifest paths stay relative; load_run_config resolves them.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
/// Sets the model, training and split seeds.
RunConfig with_seed(RunConfig cfg, std::uint64_t seed);

/// Dataset split, normalized and resampled for every branch.
struct RunData {
  WindowedDataset dataset;
  std::vector<std::string> split_warnings;
  std::unique_ptr<PreparedData> prepared;
};

RunData load_run_data(const RunConfig& cfg);

/// Exclusive hold on a run directory for the lifetime of the object.
class RunLock {
public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

private:
  std::filesystem::path path_;
};

struct TrainCommand {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out; // empty: $COSS_RUNS_DIR (or ./runs) / <config stem>-seed<N>
  std::size_t repeats = 1;
  bool quiet = false;
};

struct PruneCommand {
  std::filesystem::path run;
  std::optional<std::size_t> keep;
  std::optional<double> max_drop; // percentage points; default 2 if keep is unset
  bool finetune = false;
};

struct SelectRatesCommand {
  std::filesystem::path run;
  double max_drop = 2.0;
  bool finetune = false;
};

struct EvaluateCommand {
  std::filesystem::path run;
  Split split = Split::test;
  std::string checkpoint; // model | pruned | selected; empty picks the latest
};

struct SynthCommand {
  std::filesystem::path spec;
  std::filesystem::path out;
  double overlap = 0.0;
};

/// Each returns the directory it wrote (train: the run or the repeats root).
std::filesystem::path cmd_train(const TrainCommand& c, std::ostream& out);
void cmd_rank(const std::filesystem::path& run, std::ostream& out);
void cmd_prune(const PruneCommand& c, std::ostream& out);
void cmd_select_rates(const SelectRatesCommand& c, std::ostream& out);
void cmd_evaluate(const EvaluateCommand& c, std::ostream& out);
void cmd_report(const std::filesystem::path& run, std::ostream& out);
void cmd_synth(const SynthCommand& c, std::ostream& out);

/// Full command-line entry point: parses args (without the program name),
/// runs the command, maps errors to exit codes and prints them to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace coss
