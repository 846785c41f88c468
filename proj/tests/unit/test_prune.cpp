#include "doctest.h"

#include <cmath>
#include <random>

#include "coss/cost.hpp"
#include "coss/error.hpp"
#include "coss/prune.hpp"
#include "support/fixtures.hpp"

using namespace coss;
using namespace coss::testing;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void randomize_gates(CossModel& m, std::mt19937_64& rng) {
  for (auto* p : m.parameters(false))
    if (p->name.find("alpha") != std::string::npos)
      for (auto& v : p->value.data()) v = uniform(rng, -1, 1);
}

} // namespace

TEST_CASE("ranking of an untrained model follows ids") {
  const CossModel m(small_config(3, {20, 10}));
  const auto r = rank_sensors(m);
  REQUIRE(r.size() == 3);
  CHECK(r[0].sensor_id == "S1");
  CHECK(r[2].sensor_id == "S3");
  for (const auto& s : r) CHECK(s.score == doctest::Approx(1.0 / 3));
  for (const auto& s : rate_sensitivity(m)) CHECK(s.std_dev == doctest::Approx(0.0));
}

TEST_CASE("ranking orders by score") {
  CossModel m(small_config(3, {20, 10}));
  m.sensor_gate().alpha.value = Tensor({3}, {0.1, 0.9, -0.2});
  const auto r = rank_sensors(m);
  CHECK(r[0].sensor_id == "S2");
  CHECK(r[1].sensor_id == "S1");
  CHECK(r[2].sensor_id == "S3");
}

TEST_CASE("rate sensitivity hand example") {
  CossModel m(small_config(1, {20, 10, 5}));
  m.sensors()[0].rate_gate.alpha.value = Tensor({3}, {std::log(0.5), std::log(0.3), std::log(0.2)});
  CHECK(rate_sensitivity(m)[0].std_dev == doctest::Approx(0.1247).epsilon(1e-3));
}

TEST_CASE("prune and select contracts") {
  CossModel m(small_config(2, {20, 10, 5}));
  prune_sensor(m, "S2");
  CHECK(m.sensor_gate().weights(m.active_sensors())[0] == 1.0);
  CHECK_THROWS_AS(prune_sensor(m, "S2"), StateError);
  CHECK_THROWS_AS(prune_sensor(m, "S1"), StateError);
  CHECK_THROWS_AS(prune_sensor(m, "S9"), InputError);
  CHECK_THROWS_AS(select_rate(m, "S1", 15), InputError);
  CHECK_THROWS_AS(select_rate(m, "S2", 10), StateError);
  select_rate(m, "S1", 10);
  CHECK(m.sensors()[0].active_indices() == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(select_rate(m, "S1", 20), InputError);
  CHECK_NOTHROW(select_rate(m, "S1", 10));
}

TEST_CASE("pruned forward equals the masked oracle") {
  std::mt19937_64 rng(8);
  const auto cfg = small_config(3, {20, 10, 5}, 4, 2);
  CossModel full(cfg);
  randomize_gates(full, rng);
  const auto in = random_inputs(cfg, 3, rng);
  const auto before = parameter_checksum(full);

  for (int trial = 0; trial < 10; ++trial) {
    CossModel m = full;
    std::vector<bool> smask(3, true);
    std::vector<std::vector<bool>> bmask(3, std::vector<bool>(3, true));
    const std::size_t drop = rng() % 3;
    for (std::size_t k = 0; k < drop; ++k) {
      const std::size_t s = rng() % 3;
      if (!smask[s] || std::count(smask.begin(), smask.end(), true) == 1) continue;
      prune_sensor(m, cfg.sensors[s].id);
      smask[s] = false;
    }
    for (std::size_t s = 0; s < 3; ++s) {
      if (!smask[s] || rng() % 2) continue;
      const std::size_t r = rng() % 3;
      select_rate(m, cfg.sensors[s].id, cfg.sensors[s].rate_candidates[r]);
      bmask[s].assign(3, false);
      bmask[s][r] = true;
    }
    CHECK(max_abs_diff(predict(m, in), masked_forward(full, smask, bmask, in)) <= 1e-12);
    CHECK(param_count(m) <= param_count(full));
  }
  CHECK(parameter_checksum(full) == before);
}

TEST_CASE("progressive pruning on a small dataset") {
  const auto cfg = small_config(3, {20, 10, 5});
  const auto prep = prepare(small_synth(), cfg);
  CossModel m(cfg);
  m.set_mode(nn::BnMode::inference);
  m.sensor_gate().alpha.value = Tensor({3}, {0.5, -0.1, 0.2});
  const auto sum = parameter_checksum(m);
  const PruneCurve curve = progressive_prune(m, *prep.data, PruneOptions{});
  CHECK(parameter_checksum(m) == sum);
  REQUIRE(curve.steps.size() == 2);
  CHECK(curve.steps[0].removed_sensor == "S2");
  CHECK(curve.steps[1].removed_sensor == "S3");
  CHECK(curve.steps[1].remaining == std::vector<std::string>{"S1"});
  CHECK(curve.steps[0].cost_after.params < curve.baseline_cost.params);
  CHECK(curve.steps[1].cost_after.macs_per_window < curve.steps[0].cost_after.macs_per_window);

  const CossModel p = apply_pruning(m, curve, 1);
  CHECK(p.active_sensors() == std::vector<bool>{true, false, true});
  CHECK(pruned_sensors(curve, 2) == std::vector<std::string>{"S2", "S3"});
}

TEST_CASE("threshold rule") {
  PruneCurve c;
  c.baseline_metric = 0.90;
  c.steps.resize(3);
  c.steps[0].metric_after = 0.895;
  c.steps[1].metric_after = 0.85;
  c.steps[2].metric_after = 0.89;
  CHECK(threshold_count(c, 2.0) == 3);
  CHECK(threshold_count(c, 1.0) == 1);
  CHECK(threshold_count(c, 10.0) == 3);
  CHECK(threshold_count(c, 0.1) == 0);
}

TEST_CASE("rate selection stays within the drop budget") {
  const auto cfg = small_config(3, {20, 10, 5});
  const auto prep = prepare(small_synth(), cfg);
  CossModel m(cfg);
  m.set_mode(nn::BnMode::inference);
  const auto sum = parameter_checksum(m);
  const auto res = select_rates(m, *prep.data, 2.0, Split::validation, Metric::macro_f1);
  CHECK(parameter_checksum(m) == sum);
  CHECK(res.selection.rates.size() == 3);
  CHECK(100 * (res.baseline_metric - res.selection.metric) <= 2.0 + 1e-9);
  const CossModel sel = apply_rates(m, res.selection);
  for (const auto& s : sel.sensors()) CHECK(s.active_indices().size() == 1);
  CHECK(data_rate(sel) <= data_rate(m));
  const auto probes = probe_rates(m, *prep.data, Split::validation, Metric::macro_f1);
  CHECK(probes.size() == 9);
}
