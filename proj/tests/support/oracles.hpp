#pragma once

// Independent oracles shared by the unit and acceptance tests. Nothing here
// calls the code path it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "coss/autograd.hpp"
#include "coss/kernels.hpp"
#include "coss/model.hpp"
#include "coss/random.hpp"
#include "coss/tensor.hpp"

namespace coss::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

/// Resampled value straight from the interpolation formula, one index at a time.
inline double interpolate_direct(const std::vector<double>& od, double step, std::size_t i) {
  const double pos = double(i) * step;
  const double lo = std::floor(pos), hi = std::ceil(pos);
  const double a = od[std::size_t(lo)], b = od[std::size_t(hi)];
  return a + (pos - lo) * (b - a);
}

/// out[b,o,t] = bias[o] + sum_{c,k} x[b,c,t+k] w[o,c,k].
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), O = w.dim(0), K = w.dim(2);
  Tensor y({B, O, L - K + 1});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t t = 0; t + K <= L; ++t) {
        double s = bias[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t k = 0; k < K; ++k) s += x.at(b, c, t + k) * w.at(o, c, k);
        y.at(b, o, t) = s;
      }
  return y;
}

/// Relative error ||a - n|| / max(||a||, ||n||) of two gradient tensors.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / scale;
}

/// Central differences of `f` with respect to every element of `p.value`.
inline Tensor numeric_gradient(nn::Parameter& p, const std::function<double()>& f, double h = 1e-5) {
  Tensor g = Tensor::zeros_like(p.value);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double saved = p.value[i];
    p.value[i] = saved + h;
    const double up = f();
    p.value[i] = saved - h;
    const double down = f();
    p.value[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Weights exp(a_j) m_j / sum_k exp(a_k) m_k over the full alpha vector.
inline std::vector<double> masked_softmax(const Tensor& alpha, const std::vector<bool>& mask) {
  double mx = -INFINITY;
  for (std::size_t j = 0; j < alpha.size(); ++j)
    if (mask[j]) mx = std::max(mx, double(alpha[j]));
  std::vector<double> w(alpha.size(), 0.0);
  double z = 0;
  for (std::size_t j = 0; j < alpha.size(); ++j)
    if (mask[j]) z += (w[j] = std::exp(alpha[j] - mx));
  for (auto& v : w) v /= z;
  return w;
}

/// Logits of the unpruned model `full` with gate entries outside the masks
/// zeroed and the rest renormalized. Every branch is encoded with the
/// reference kernels, and the fusion sums are written out here.
inline Tensor masked_forward(const CossModel& full, const std::vector<bool>& sensor_mask,
                             const std::vector<std::vector<bool>>& branch_masks, const BranchInputs& inputs) {
  kernels::ScopedBackend ref(kernels::Backend::reference);
  const auto& sensors = full.sensors();
  const std::size_t filters = full.config().filters;
  const std::size_t batch = inputs.tensors[0][0].dim(0);
  const auto sw = masked_softmax(full.sensor_gate().alpha.value, sensor_mask);
  Tensor fused({batch, filters});
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    if (!sensor_mask[s]) continue;
    const auto rw = masked_softmax(sensors[s].rate_gate.alpha.value, branch_masks[s]);
    for (std::size_t r = 0; r < sensors[s].branches.size(); ++r) {
      if (!branch_masks[s][r]) continue;
      const Tensor f = encode_branch(sensors[s].branches[r], inputs.tensors[s][r]);
      for (std::size_t i = 0; i < f.size(); ++i) fused[i] += sw[s] * rw[r] * f[i];
    }
  }
  return classify(full, fused);
}

/// Order-sensitive checksum over every parameter and batch-norm buffer.
inline std::uint64_t parameter_checksum(const CossModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = (h ^ bits) * 1099511628211ULL;
  };
  for (const auto* p : model.parameters(false))
    for (double v : p->value.values()) mix(v);
  for (const auto* bn : model.batch_norms(false)) {
    for (double v : bn->running_mean) mix(v);
    for (double v : bn->running_var) mix(v);
  }
  return h;
}

/// One sensor config with `rates` at f_original = rates.front().
inline SensorConfig sensor_config(std::string id, std::size_t channels, std::vector<double> rates) {
  SensorConfig s;
  s.id = std::move(id);
  s.channels = channels;
  s.f_original = rates.front();
  s.rate_candidates = std::move(rates);
  return s;
}

/// Random branch inputs aligned with the model configuration.
inline BranchInputs random_inputs(const ModelConfig& cfg, std::size_t batch, std::mt19937_64& rng) {
  BranchInputs in;
  for (const auto& s : cfg.sensors) {
    in.tensors.emplace_back();
    for (double r : s.rate_candidates) {
      const auto g = branch_geometry(cfg, s, r);
      in.tensors.back().push_back(random_tensor({batch, s.channels, g.input_length}, rng));
    }
  }
  return in;
}

} // namespace coss::testing
