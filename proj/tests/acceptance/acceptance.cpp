// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Criteria 4 and 6-9 share five training runs of configs/synthetic.json
// (informative S1, redundant low-pass copy S2, noise S3; seeds 0-4).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "coss/checkpoint.hpp"
#include "coss/cost.hpp"
#include "coss/prune.hpp"
#include "coss/resample.hpp"
#include "coss/run.hpp"
#include "support/fixtures.hpp"

using namespace coss;
using namespace coss::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string title, detail;
};
std::map<int, Verdict> verdicts;

void verdict(int id, bool pass, const std::string& title, const std::string& detail) {
  verdicts[id] = {pass, title, detail};
  fmt::print("  [criterion {} evaluated]\n", id);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1 ----------------------------------------------------------------------

void resampling_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0;
  bool props = true;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t len = 2 + rng() % 1000;
    const double step = uniform(rng, 1.0, 20.0);
    std::vector<double> od(len);
    for (auto& v : od) v = uniform(rng, -10, 10);
    const auto td = resample::resample_series(od, step);
    if (td.size() != std::size_t(std::floor(double(len - 1) / step)) + 1) props = false;
    for (std::size_t i = 0; i < td.size(); ++i) worst = std::max(worst, std::abs(td[i] - interpolate_direct(od, step, i)));

    props = props && resample::resample_series(od, 1.0) == od;
    const std::size_t k = 1 + rng() % 8;
    const auto dec = resample::resample_series(od, double(k));
    for (std::size_t i = 0; i < dec.size(); ++i) props = props && dec[i] == od[i * k];
    const double a = uniform(rng, -2, 2), b = uniform(rng, -2, 2);
    for (std::size_t i = 0; i < len; ++i) od[i] = a * double(i) + b;
    const auto lin = resample::resample_series(od, step);
    for (std::size_t i = 0; i < lin.size(); ++i) props = props && std::abs(lin[i] - (a * double(i) * step + b)) <= 1e-12;
  }
  const double secs = seconds_since(t0);
  verdict(1, worst <= 1e-12 && props && secs < 5, "resampling oracle",
          fmt::format("1000 cases, max error {:.2e}, identity/decimation/affine {}, {:.2f} s", worst,
                      props ? "hold" : "VIOLATED", secs));
}

// ---- 2 ----------------------------------------------------------------------

void adaptive_kernels() {
  struct Row {
    const char* name;
    std::size_t ks;
    std::vector<double> rates;
    std::vector<std::size_t> expected;
  };
  const std::vector<Row> rows{{"Opportunity", 9, {30, 25, 20, 15, 10}, {9, 7, 6, 4, 3}},
                              {"PAMAP2", 20, {100, 80, 60, 40, 30, 20, 10}, {20, 16, 12, 8, 6, 4, 2}},
                              {"MHEALTH", 10, {50, 40, 30, 20, 15, 10}, {10, 8, 6, 4, 3, 2}}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    std::vector<std::size_t> got;
    for (double f : r.rates) got.push_back(resample::adaptive_kernel(r.ks, r.rates.front(), f));
    ok = ok && got == r.expected;
    detail += fmt::format("{} {{{}}} ", r.name, fmt::join(got, ","));
  }
  verdict(2, ok, "adaptive kernel tables", detail);
}

// ---- 3 ----------------------------------------------------------------------

double op_gradient_error(std::vector<nn::Parameter*> params, const std::function<nn::Var()>& build) {
  for (auto* p : params) p->zero_grad();
  nn::backward(build());
  std::vector<Tensor> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i)
    worst = std::max(worst, relative_error(analytic[i], numeric_gradient(*params[i], [&] { return build().value()[0]; })));
  return worst;
}

void gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  auto P = [&](const char* n, Shape s) { return nn::Parameter(n, random_tensor(std::move(s), rng)); };
  std::vector<std::pair<std::string, double>> errs;

  nn::Parameter x = P("x", {3, 2, 12}), w = P("w", {4, 2, 3}), b = P("b", {4});
  const Tensor rc = random_tensor({3, 4, 10}, rng), rx = random_tensor({3, 2, 12}, rng), rp = random_tensor({3, 2}, rng);
  errs.emplace_back("conv1d", op_gradient_error({&x, &w, &b}, [&] {
                      return nn::dot(nn::conv1d(nn::parameter(x), nn::parameter(w), nn::parameter(b)), rc);
                    }));
  errs.emplace_back("relu", op_gradient_error({&x}, [&] { return nn::dot(nn::relu(nn::parameter(x)), rx); }));
  errs.emplace_back("max_pool",
                    op_gradient_error({&x}, [&] { return nn::dot(nn::global_max_pool(nn::parameter(x)), rp); }));
  nn::BatchNorm bn("bn", 2);
  bn.gamma.value = random_tensor({2}, rng, 0.5, 1.5);
  bn.beta.value = random_tensor({2}, rng);
  errs.emplace_back("batch_norm", op_gradient_error({&x, &bn.gamma, &bn.beta}, [&] {
                      return nn::dot(nn::batch_norm(nn::parameter(x), bn), rx);
                    }));
  nn::Parameter dx = P("dx", {3, 5}), dw = P("dw", {4, 5}), db = P("db", {4}), a = P("a", {4});
  const Tensor rd = random_tensor({3, 4}, rng), r4 = random_tensor({4}, rng), r2 = random_tensor({2}, rng);
  const std::vector<int> labels{1, 3, 0};
  const std::vector<std::size_t> idx{3, 0};
  errs.emplace_back("dense", op_gradient_error({&dx, &dw, &db}, [&] {
                      return nn::dot(nn::dense(nn::parameter(dx), nn::parameter(dw), nn::parameter(db)), rd);
                    }));
  errs.emplace_back("softmax", op_gradient_error({&a}, [&] { return nn::dot(nn::softmax(nn::parameter(a)), r4); }));
  errs.emplace_back("gather", op_gradient_error({&a}, [&] { return nn::dot(nn::gather(nn::parameter(a), idx), r2); }));
  nn::Parameter f1 = P("f1", {3, 4}), f2 = P("f2", {3, 4});
  errs.emplace_back("weighted_sum", op_gradient_error({&a, &f1, &f2}, [&] {
                      const std::vector<nn::Var> fs{nn::parameter(f1), nn::parameter(f2)};
                      return nn::dot(nn::weighted_sum(fs, nn::softmax(nn::gather(nn::parameter(a), idx))), rd);
                    }));
  errs.emplace_back("cross_entropy", op_gradient_error({&dx, &dw, &db}, [&] {
                      return nn::cross_entropy(nn::dense(nn::parameter(dx), nn::parameter(dw), nn::parameter(db)),
                                               labels);
                    }));
  errs.emplace_back("sum", op_gradient_error({&f1}, [&] { return nn::sum(nn::parameter(f1)); }));

  // Full model, 2 sensors x 2 rates, non-uniform gates.
  const auto cfg = small_config(2, {20, 10}, 4, 2);
  CossModel model(cfg);
  for (auto* p : model.parameters(false))
    if (p->name.find("alpha") != std::string::npos)
      for (auto& v : p->value.data()) v = uniform(rng, -0.5, 0.5);
  const auto in = random_inputs(cfg, 4, rng);
  const std::vector<int> y{0, 1, 2, 1};
  errs.emplace_back("model", op_gradient_error(model.parameters(),
                                               [&] { return nn::cross_entropy(forward(model, in), y); }));

  double worst = 0;
  std::string worst_name;
  for (const auto& [n, e] : errs)
    if (e >= worst) {
      worst = e;
      worst_name = n;
    }
  const double secs = seconds_since(t0);
  verdict(3, worst < 1e-4 && secs < 60, "gradient suite",
          fmt::format("{} checks incl. full 2x2 model ({} parameter tensors), worst relative error {:.2e} ({}), {:.2f} s",
                      errs.size(), model.parameters().size(), worst, worst_name, secs));
}

// ---- 5 and 10 ------------------------------------------------------------------

void pruning_equivalence_and_costs() {
  std::mt19937_64 rng(5150);
  const auto cfg = small_config(4, {20, 10, 5}, 5, 2);
  CossModel full(cfg);
  for (auto* p : full.parameters(false))
    for (auto& v : p->value.data()) v = uniform(rng, -1, 1);
  for (auto* bn : full.batch_norms(false))
    for (auto& v : bn->running_var) v = uniform(rng, 0.5, 2.0);
  full.set_mode(nn::BnMode::inference);
  const auto inputs = random_inputs(cfg, 3, rng);
  const auto checksum = parameter_checksum(full);

  double worst = 0;
  bool mutation_free = true, monotone = true, elements_match = true;
  std::size_t ops = 0;
  for (int trial = 0; trial < 20; ++trial) {
    CossModel m = full;
    const auto model_sum = parameter_checksum(m);
    std::vector<bool> smask(4, true);
    std::vector<std::vector<bool>> bmask(4, std::vector<bool>(3, true));
    auto cost = cost_snapshot(m);
    const int steps = 1 + int(rng() % 5);
    for (int s = 0; s < steps; ++s) {
      const std::size_t i = rng() % 4;
      if (!smask[i]) continue;
      if (rng() % 2 && std::count(smask.begin(), smask.end(), true) > 1) {
        prune_sensor(m, cfg.sensors[i].id);
        smask[i] = false;
      } else {
        std::vector<std::size_t> act;
        for (std::size_t r = 0; r < 3; ++r)
          if (bmask[i][r]) act.push_back(r);
        const std::size_t r = act[rng() % act.size()];
        select_rate(m, cfg.sensors[i].id, cfg.sensors[i].rate_candidates[r]);
        bmask[i].assign(3, false);
        bmask[i][r] = true;
      }
      ++ops;
      worst = std::max(worst, max_abs_diff(predict(m, inputs), masked_forward(full, smask, bmask, inputs)));
      const auto next = cost_snapshot(m);
      monotone = monotone && next.params <= cost.params && next.macs_per_window <= cost.macs_per_window &&
                 next.data_rate <= cost.data_rate && next.bytes <= cost.bytes;
      cost = next;
      elements_match = elements_match && checkpoint_parameter_elements(serialize_model(m)) == param_count(m);
    }
    mutation_free = mutation_free && parameter_checksum(m) == model_sum;
  }
  mutation_free = mutation_free && parameter_checksum(full) == checksum;
  verdict(5, worst <= 1e-12 && mutation_free, "pruning equivalence",
          fmt::format("20 configurations, {} prune/select operations, max |pruned - masked| {:.2e}, checksums {}",
                      ops, worst, mutation_free ? "unchanged" : "CHANGED"));

  // Multiply counter on a 1-sensor x 2-rate configuration.
  const auto one = small_config(1, {20, 10}, 6, 3);
  CossModel m1(one);
  m1.set_mode(nn::BnMode::inference);
  const auto in1 = random_inputs(one, 1, rng);
  std::uint64_t counted = 0;
  {
    kernels::ScopedBackend ref(kernels::Backend::reference);
    kernels::reference::reset_multiply_count();
    predict(m1, in1);
    counted = kernels::reference::multiply_count();
  }
  const bool macs_ok = counted == macs_per_window(m1);
  const std::size_t elems = checkpoint_parameter_elements(serialize_model(m1));
  const bool count_ok = elems == param_count(m1) && elements_match;
  verdict(10, macs_ok && count_ok && monotone, "cost accounting",
          fmt::format("params {} vs checkpoint {} (and all criterion-5 states {}), macs {} vs counted {}, "
                      "costs non-increasing {}",
                      param_count(m1), elems, elements_match ? "match" : "DIFFER", macs_per_window(m1), counted,
                      monotone ? "yes" : "NO"));
}

// ---- synthetic suite ------------------------------------------------------------

struct SeedResult {
  std::uint64_t seed = 0;
  double seconds = 0;
  bool gates_ok = true;
  double worst_gate_sum_error = 0;
  double min_gate_weight = 1;
  std::size_t steps = 0;
  std::map<std::string, double> sensor_score;
  std::map<std::string, double> rate_std;
  std::vector<double> s1_rate_scores; // fastest first
  double test_full = 0, test_without_noise = 0, test_without_informative = 0;
  std::map<double, double> informative_probe;      // S1 at one rate, S2 and S3 untouched
  std::map<double, double> informative_rate_test; // S1 alone, restricted to one rate
  std::map<double, double> informative_rate_tuned; // the same after fine-tuning
  double informative_alone = 0;
  std::size_t threshold_pruned = 0;
  std::string pruned_list;
  double ft_base = 0, ft_after = 0, ft_tuned = 0;
};

SeedResult run_seed(const RunConfig& base, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SeedResult r;
  r.seed = seed;
  const RunConfig cfg = with_seed(base, seed);
  RunData data = load_run_data(cfg);
  const PreparedData& prep = *data.prepared;
  CossModel model(cfg.model);

  train(model, prep, cfg.train, [&](const CossModel& m, const StepInfo&) {
    ++r.steps;
    auto check = [&](const std::vector<double>& w) {
      double total = 0;
      for (double v : w) {
        total += v;
        r.min_gate_weight = std::min(r.min_gate_weight, v);
        if (!(v > 0)) r.gates_ok = false;
      }
      r.worst_gate_sum_error = std::max(r.worst_gate_sum_error, std::abs(total - 1));
      if (std::abs(total - 1) > 1e-9) r.gates_ok = false;
    };
    check(m.sensor_gate().weights(m.active_sensors()));
    for (const auto& s : m.sensors()) check(s.rate_gate.weights(s.active_branches()));
  });

  const Metric f1 = Metric::macro_f1;
  for (const auto& s : gate_weights(model)) {
    r.sensor_score[s.sensor_id] = s.score;
    if (s.sensor_id == "S1")
      for (const auto& rs : s.rates) r.s1_rate_scores.push_back(rs.score);
  }
  for (const auto& s : rate_sensitivity(model)) r.rate_std[s.sensor_id] = s.std_dev;

  r.test_full = evaluate(model, prep, Split::test).get(f1);
  CossModel no_noise = model;
  prune_sensor(no_noise, "S3");
  r.test_without_noise = evaluate(no_noise, prep, Split::test).get(f1);
  CossModel no_info = model;
  prune_sensor(no_info, "S1");
  r.test_without_informative = evaluate(no_info, prep, Split::test).get(f1);

  for (const auto& p : probe_rates(model, prep, Split::test, f1))
    if (p.sensor_id == "S1") r.informative_probe[p.rate] = p.metric;
  CossModel alone = model;
  prune_sensor(alone, "S2");
  prune_sensor(alone, "S3");
  r.informative_alone = evaluate(alone, prep, Split::test).get(f1);
  for (double rate : cfg.model.sensor("S1").rate_candidates) {
    CossModel one = alone;
    select_rate(one, "S1", rate);
    r.informative_rate_test[rate] = evaluate(one, prep, Split::test).get(f1);
    fine_tune(one, prep, cfg.train);
    r.informative_rate_tuned[rate] = evaluate(one, prep, Split::test).get(f1);
  }

  PruneOptions opts;
  opts.metric = f1;
  const PruneCurve curve = progressive_prune(model, prep, opts);
  r.threshold_pruned = threshold_count(curve, 2.0);
  r.pruned_list = fmt::format("{}", fmt::join(pruned_sensors(curve, r.threshold_pruned), ","));
  CossModel pruned = apply_pruning(model, curve, r.threshold_pruned);
  r.ft_base = r.test_full;
  r.ft_after = evaluate(pruned, prep, Split::test).get(f1);
  fine_tune(pruned, prep, cfg.train);
  r.ft_tuned = evaluate(pruned, prep, Split::test).get(f1);

  r.seconds = seconds_since(t0);
  return r;
}

void synthetic_suite(const fs::path& config_path) {
  const auto t0 = Clock::now();
  const RunConfig base = load_run_config(config_path);
  std::vector<SeedResult> seeds;
  for (std::uint64_t s = 0; s < 5; ++s) {
    seeds.push_back(run_seed(base, s));
    const auto& r = seeds.back();
    fmt::print("  seed {}: {:.1f} s, {} steps, test F1 {:.4f} | sensor scores S1 {:.3f} S2 {:.3f} S3 {:.3f} | "
               "S1 rate scores {:.3f} | rate std S1 {:.4f} S3 {:.4f}\n",
               r.seed, r.seconds, r.steps, r.test_full, r.sensor_score.at("S1"), r.sensor_score.at("S2"),
               r.sensor_score.at("S3"), fmt::join(r.s1_rate_scores, "/"), r.rate_std.at("S1"), r.rate_std.at("S3"));
    fmt::print("          F1 without S3 {:.4f}, without S1 {:.4f} | S1 probe", r.test_without_noise,
               r.test_without_informative);
    for (auto it = r.informative_probe.rbegin(); it != r.informative_probe.rend(); ++it)
      fmt::print(" {}:{:.4f}", format_rate(it->first), it->second);
    fmt::print(" | S1 alone {:.4f}, by rate", r.informative_alone);
    for (auto it = r.informative_rate_test.rbegin(); it != r.informative_rate_test.rend(); ++it)
      fmt::print(" {}:{:.4f}", format_rate(it->first), it->second);
    fmt::print(", fine-tuned");
    for (auto it = r.informative_rate_tuned.rbegin(); it != r.informative_rate_tuned.rend(); ++it)
      fmt::print(" {}:{:.4f}", format_rate(it->first), it->second);
    fmt::print("\n         ");
    fmt::print(" | threshold prunes {} ({}) F1 {:.4f} -> {:.4f} -> {:.4f} fine-tuned\n", r.threshold_pruned,
               r.pruned_list.empty() ? "-" : r.pruned_list, r.ft_base, r.ft_after, r.ft_tuned);
    std::fflush(stdout);
  }
  const double total = seconds_since(t0);

  // 4
  bool gates = true;
  double sum_err = 0, min_w = 1;
  std::size_t steps = 0;
  for (const auto& r : seeds) {
    gates = gates && r.gates_ok;
    sum_err = std::max(sum_err, r.worst_gate_sum_error);
    min_w = std::min(min_w, r.min_gate_weight);
    steps += r.steps;
  }
  verdict(4, gates, "gate invariants",
          fmt::format("{} optimizer steps over 5 runs, max |sum - 1| {:.2e}, min weight {:.3e}", steps, sum_err, min_w));

  // 6
  int ranked = 0, noise_ok = 0, info_ok = 0;
  for (const auto& r : seeds) {
    ranked += r.sensor_score.at("S1") > r.sensor_score.at("S3");
    noise_ok += 100 * std::abs(r.test_full - r.test_without_noise) < 2;
    info_ok += 100 * (r.test_full - r.test_without_informative) > 10;
  }
  verdict(6, ranked >= 4 && noise_ok == 5 && info_ok == 5 && total < 600, "synthetic sensor ranking",
          fmt::format("S1 above S3 in {}/5, pruning S3 moves F1 < 2 pts in {}/5, pruning S1 drops F1 > 10 pts in "
                      "{}/5, {:.0f} s for 5 seeds",
                      ranked, noise_ok, info_ok, total));

  // 7
  int spread = 0, monotone = 0;
  for (const auto& r : seeds) {
    spread += r.rate_std.at("S1") > r.rate_std.at("S3");
    bool mono = true;
    for (std::size_t i = 1; i < r.s1_rate_scores.size(); ++i) mono = mono && r.s1_rate_scores[i] <= r.s1_rate_scores[i - 1];
    monotone += mono;
  }
  verdict(7, spread >= 4 && monotone >= 4, "rate-sensitivity direction",
          fmt::format("S1 rate-score std above S3 in {}/5, S1 scores non-increasing with rate in {}/5", spread,
                      monotone));

  // 8: S1's band tops out at 4 Hz, so 40 and 20 Hz are at least 15 Hz and
  // Nyquist-safe; 5 Hz is below Nyquist. Probe: S1 at one rate, other sensors
  // keep all their branches, no retraining.
  const double band_high = base.synthetic->sensors[0].band_high;
  auto rate_behavior = [&](const std::map<double, double>& by_rate, double reference) {
    bool ok = true;
    for (const auto& [rate, f] : by_rate) {
      if (rate >= 15 && rate >= 2 * band_high) ok = ok && 100 * std::abs(reference - f) < 2;
      if (rate < 2 * band_high) ok = ok && 100 * (reference - f) > 5;
    }
    return ok;
  };
  int rate_ok = 0, alone_ok = 0, tuned_ok = 0;
  for (const auto& r : seeds) {
    rate_ok += rate_behavior(r.informative_probe, r.test_full);
    alone_ok += rate_behavior(r.informative_rate_test, r.informative_alone);
    tuned_ok += rate_behavior(r.informative_rate_tuned, r.informative_alone);
  }
  verdict(8, rate_ok >= 4, "rate selection behavior",
          fmt::format("informative sensor (band <= {} Hz) probed with other sensors fused: safe rates within 2 pts "
                      "and sub-Nyquist rates > 5 pts worse in {}/5 (S1 as the only sensor: {}/5; that, "
                      "after 10 fine-tuning epochs at the selected rate: {}/5, not counted)",
                      band_high, rate_ok, alone_ok, tuned_ok));

  // 9
  int recovered = 0;
  for (const auto& r : seeds)
    recovered += r.ft_tuned >= r.ft_after + 0.5 * std::max(0.0, r.ft_base - r.ft_after) - 1e-12;
  verdict(9, recovered >= 4, "fine-tuning recovery",
          fmt::format("10 fine-tuning epochs recover >= 50% of the threshold-pruning drop in {}/5", recovered));
}

// ---- 11 and 12 ----------------------------------------------------------------

fs::path make_temp(const char* name) {
  const fs::path p = fs::temp_directory_path() / fmt::format("coss_accept_{}_{}", name, ::getpid());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void determinism(const fs::path& config_path) {
  const fs::path tmp = make_temp("determinism");
  RunConfig rc = load_run_config(config_path);
  rc.synthetic->windows_per_class = 40;
  rc.train.max_epochs = 4;
  rc.train.patience = 4;
  std::ofstream(tmp / "config.json") << nlohmann::json(rc).dump(2);
  std::ostringstream sink;
  TrainCommand c;
  c.config = tmp / "config.json";
  c.seed = 3;
  c.quiet = true;
  c.out = tmp / "a";
  cmd_train(c, sink);
  c.out = tmp / "b";
  cmd_train(c, sink);
  const bool ckpt = slurp(tmp / "a" / "model.ckpt") == slurp(tmp / "b" / "model.ckpt");
  const bool hist = slurp(tmp / "a" / "history.jsonl") == slurp(tmp / "b" / "history.jsonl");
  const auto size = fs::file_size(tmp / "a" / "model.ckpt");
  fs::remove_all(tmp);
  verdict(11, ckpt && hist, "determinism",
          fmt::format("two cmd_train runs, seed 3: checkpoint ({} bytes) {}, history {}", size,
                      ckpt ? "identical" : "DIFFERENT", hist ? "identical" : "DIFFERENT"));
}

void end_to_end_report(const fs::path& config_path) {
  const fs::path tmp = make_temp("report");
  RunConfig rc = load_run_config(config_path);
  rc.synthetic->windows_per_class = 60;
  rc.train.max_epochs = 15;
  rc.train.patience = 5;
  std::ofstream(tmp / "config.json") << nlohmann::json(rc).dump(2);
  std::ostringstream sink;
  TrainCommand t;
  t.config = tmp / "config.json";
  t.out = tmp / "run";
  t.quiet = true;
  cmd_train(t, sink);
  PruneCommand p;
  p.run = t.out;
  p.finetune = true;
  cmd_prune(p, sink);
  SelectRatesCommand s;
  s.run = t.out;
  cmd_select_rates(s, sink);
  std::ostringstream report;
  cmd_report(t.out, report);
  const std::string text = report.str();
  const auto j = nlohmann::json::parse(slurp(t.out / "report.json"));

  bool ok = text == slurp(t.out / "report.txt");
  std::string missing;
  for (const char* row : {"Pruned sensors", "Performance reduction(%)", "Model size reduction(MB)",
                          "Model size reduction(%)", "Selected sampling rate (Hz)"}) {
    if (text.find(row) == std::string::npos) {
      ok = false;
      missing += fmt::format(" '{}'", row);
    }
  }
  // Fraction "a/b (c%)" and a rate entry "<hz>(<sensor>)" for every surviving sensor.
  const std::string frac = j.at("size_reduction").get<std::string>();
  ok = ok && frac.find('/') != std::string::npos && frac.find('%') != std::string::npos &&
       text.find(frac) != std::string::npos;
  for (const auto& [id, hz] : j.at("selected_rates").items()) {
    const std::string entry = fmt::format("{}({})", format_rate(hz.get<double>()), id);
    if (text.find(entry) == std::string::npos) {
      ok = false;
      missing += " " + entry;
    }
  }
  ok = ok && !j.at("selected_rates").empty();
  fs::remove_all(tmp);
  std::string shown;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);)
    if (!line.empty() && line[0] != '-' && line != "Result summary") shown += "\n    " + line;
  verdict(12, ok, "end-to-end report", (missing.empty() ? "all rows rendered:" : "missing" + missing) + shown);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path config = fs::path(COSS_SOURCE_DIR) / "configs" / "synthetic.json";
  std::vector<int> expected_failures;
  app.add_option("--config", config, "Synthetic suite run config");
  app.add_option("--expect-fail", expected_failures, "Criteria known to fail; they still print FAIL");
  CLI11_PARSE(app, argc, argv);

  try {
    resampling_oracle();
    adaptive_kernels();
    gradient_suite();
    pruning_equivalence_and_costs();
    determinism(config);
    end_to_end_report(config);
    synthetic_suite(config);
  } catch (const std::exception& e) {
    fmt::print("acceptance aborted: {}\n", e.what());
  }
  int passed = 0;
  std::vector<int> unexpected, known;
  fmt::print("\n");
  for (int id = 1; id <= 12; ++id) {
    const auto it = verdicts.find(id);
    const bool pass = it != verdicts.end() && it->second.pass;
    if (it == verdicts.end()) {
      fmt::print("FAIL criterion {:>2}: not evaluated\n", id);
    } else {
      fmt::print("{} criterion {:>2}: {} | {}\n", pass ? "PASS" : "FAIL", id, it->second.title, it->second.detail);
    }
    const bool expected = std::find(expected_failures.begin(), expected_failures.end(), id) != expected_failures.end();
    if (pass) ++passed;
    else (expected ? known : unexpected).push_back(id);
  }
  fmt::print("{}/12 criteria passed", passed);
  if (!known.empty()) fmt::print("; known failures: {}", fmt::join(known, ","));
  if (!unexpected.empty()) fmt::print("; unexpected failures: {}", fmt::join(unexpected, ","));
  fmt::print("\n");
  return unexpected.empty() ? 0 : 1;
}
