#include "doctest.h"

#include <random>

#include "coss/error.hpp"
#include "coss/model.hpp"
#include "support/fixtures.hpp"

using namespace coss;
using namespace coss::testing;

TEST_CASE("branch counts and kernels for wide configurations") {
  ModelConfig mh;
  for (int i = 0; i < 8; ++i) mh.sensors.push_back(sensor_config("S" + std::to_string(i), 3, {50, 40, 30, 20, 15, 10}));
  mh.window_seconds = 4;
  mh.ks_original = 10;
  mh.filters = 2;
  mh.classifier_hidden = 2;
  mh.num_classes = 12;
  CHECK(mh.branch_count() == 48);

  ModelConfig pa = mh;
  pa.sensors.clear();
  for (int i = 0; i < 12; ++i)
    pa.sensors.push_back(sensor_config("S" + std::to_string(i), 3, {100, 80, 60, 40, 30, 20, 10}));
  pa.ks_original = 20;
  CHECK(pa.branch_count() == 84);
  CHECK(branch_geometry(pa, pa.sensors[0], 30).kernel == 6);
  const CossModel m(pa);
  CHECK(m.sensors()[3].branches[4].geometry.kernel == 6);
}

TEST_CASE("configuration errors") {
  auto cfg = small_config(1, {20, 10});
  cfg.ks_original = 30;
  CHECK_THROWS_AS(CossModel{cfg}, ConfigError);
  cfg = small_config(1, {20, 30});
  CHECK_THROWS_AS(CossModel{cfg}, ConfigError);
  cfg = small_config(1, {20, 1});
  CHECK_THROWS_AS(CossModel{cfg}, ConfigError);
  cfg = small_config(2, {20});
  cfg.sensors[1].id = "S1";
  CHECK_THROWS_AS(CossModel{cfg}, ConfigError);
}

TEST_CASE("fresh gates are uniform") {
  const CossModel one(small_config(1, {20}));
  CHECK(one.sensor_gate().weights({true})[0] == 1.0);
  CHECK(one.sensors()[0].rate_gate.weights({true})[0] == 1.0);

  const CossModel m(small_config(3, {20, 10, 5}));
  const auto g = gate_weights(m);
  REQUIRE(g.size() == 3);
  std::size_t gate_params = m.sensor_gate().alpha.size();
  for (const auto& s : g) {
    CHECK(s.score == doctest::Approx(1.0 / 3));
    for (const auto& r : s.rates) CHECK(r.score == doctest::Approx(1.0 / 3));
  }
  for (const auto& s : m.sensors()) gate_params += s.rate_gate.alpha.size();
  CHECK(gate_params == 3 * 3 + 3);
}

TEST_CASE("gate fusion hand examples") {
  std::mt19937_64 rng(1);
  const Tensor f1 = random_tensor({2, 3}, rng), f2 = random_tensor({2, 3}, rng);
  const std::vector<nn::Var> fs{nn::constant(f1), nn::constant(f2)};
  const std::vector<std::size_t> both{0, 1}, first{0};

  const Tensor single = rate_fusion(std::span(fs).first(1), nn::constant(Tensor({1}, {0.7})), first).value();
  for (std::size_t i = 0; i < 6; ++i) CHECK(single[i] == doctest::Approx(f1[i]));

  const Tensor mean = rate_fusion(fs, nn::constant(Tensor({2}, {0.3, 0.3})), both).value();
  for (std::size_t i = 0; i < 6; ++i) CHECK(mean[i] == doctest::Approx((f1[i] + f2[i]) / 2));

  const Tensor w = sensor_fusion(fs, nn::constant(Tensor({2}, {std::log(2.0), 0})), both).value();
  for (std::size_t i = 0; i < 6; ++i) CHECK(w[i] == doctest::Approx(2 * f1[i] / 3 + f2[i] / 3));

  CHECK_THROWS_AS(gate_fusion({}, nn::constant(Tensor({2})), {}), StateError);
}

TEST_CASE("forward shapes and widths") {
  std::mt19937_64 rng(2);
  const auto cfg = small_config(2, {20, 10, 5}, 5);
  const CossModel m(cfg);
  const auto in = random_inputs(cfg, 1, rng);
  CHECK(predict(m, in).shape() == Shape{1, 3});
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t r = 0; r < 3; ++r)
      CHECK(encode_branch(m.sensors()[s].branches[r], in.tensors[s][r]).shape() == Shape{1, 5});

  auto twice = random_inputs(cfg, 2, rng);
  for (auto& sensor : twice.tensors)
    for (auto& t : sensor)
      for (std::size_t i = 0; i < t.size() / 2; ++i) t[t.size() / 2 + i] = t[i];
  const Tensor logits = predict(m, twice);
  for (std::size_t c = 0; c < 3; ++c) CHECK(logits.at(0, c) == logits.at(1, c));

  auto missing = in;
  missing.tensors[1][2] = Tensor();
  CHECK_THROWS_AS(predict(m, missing), InputError);
  missing.tensors.pop_back();
  CHECK_THROWS_AS(predict(m, missing), InputError);
}

TEST_CASE("same seed gives the same parameters") {
  const CossModel a(small_config(2, {20, 10}, 4, 1, 9)), b(small_config(2, {20, 10}, 4, 1, 9));
  const CossModel c(small_config(2, {20, 10}, 4, 1, 10));
  CHECK(parameter_checksum(a) == parameter_checksum(b));
  CHECK(parameter_checksum(a) != parameter_checksum(c));
}

TEST_CASE("finite differences through the full model") {
  std::mt19937_64 rng(4);
  auto cfg = small_config(2, {20, 10}, 3, 2);
  CossModel model(cfg);
  // Non-uniform gates so that gate gradients are not degenerate.
  for (auto* p : model.parameters(false))
    if (p->name.find("alpha") != std::string::npos)
      for (auto& v : p->value.data()) v = uniform(rng, -0.5, 0.5);
  const auto in = random_inputs(cfg, 4, rng);
  const std::vector<int> labels{0, 2, 1, 2};
  auto loss = [&] { return nn::cross_entropy(forward(model, in), labels); };

  const auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  nn::backward(loss());
  for (auto* p : params) {
    const Tensor analytic = p->grad;
    const Tensor numeric = numeric_gradient(*p, [&] { return loss().value()[0]; });
    INFO(p->name);
    CHECK(relative_error(analytic, numeric) < 1e-4);
  }
}
