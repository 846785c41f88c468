#include "coss/resample.hpp"

#include <cmath>

#include <fmt/format.h>

#include "coss/error.hpp"

namespace coss::resample {

namespace {
// Absorbs round-off in quotients that are integral in exact arithmetic,
// e.g. 80 / (40/15) = 30.
constexpr double kFloorSlack = 1e-9;
} // namespace

double step_size(double f_original, double f_target) {
  if (!(f_original > 0) || !std::isfinite(f_original)) {
    throw ConfigError(fmt::format("original rate must be positive, got {}", f_original));
  }
  if (!(f_target > 0) || !std::isfinite(f_target)) {
    throw ConfigError(fmt::format("target rate must be positive, got {}", f_target));
  }
  if (f_target > f_original) {
    throw ConfigError(fmt::format("target rate {} Hz exceeds original rate {} Hz; upsampling is not supported",
                                  f_target, f_original));
  }
  return f_original / f_target;
}

std::size_t target_length(std::size_t source_len, double step) {
  if (source_len < 2) throw InputError(fmt::format("resampling needs at least 2 samples, got {}", source_len));
  if (!(step >= 1) || !std::isfinite(step)) throw ConfigError(fmt::format("step size must be >= 1, got {}", step));
  return std::size_t(std::floor(double(source_len - 1) / step + kFloorSlack)) + 1;
}

namespace {

void resample_into(const Real* src, std::size_t len, double step, Real* dst, std::size_t out_len) {
  const std::size_t last = len - 1;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = double(i) * step;
    std::size_t lo = std::size_t(std::floor(pos));
    std::size_t hi = std::size_t(std::ceil(pos));
    double frac = pos - double(lo);
    if (lo > last) {
      lo = last;
      frac = 0;
    }
    if (hi > last) hi = last;
    dst[i] = src[lo] + Real(frac) * (src[hi] - src[lo]);
  }
}

} // namespace

std::vector<Real> resample_series(std::span<const Real> source, double step) {
  const std::size_t out_len = target_length(source.size(), step);
  std::vector<Real> out(out_len);
  resample_into(source.data(), source.size(), step, out.data(), out_len);
  return out;
}

Tensor resample_last_axis(const Tensor& source, double step) {
  if (source.rank() == 0) throw ShapeError("resample: scalar input");
  const std::size_t len = source.shape().back();
  const std::size_t out_len = target_length(len, step);
  Shape shape = source.shape();
  shape.back() = out_len;
  Tensor out(shape);
  const std::size_t rows = source.size() / len;
  for (std::size_t r = 0; r < rows; ++r) {
    resample_into(source.ptr() + r * len, len, step, out.ptr() + r * out_len, out_len);
  }
  return out;
}

std::size_t adaptive_kernel(std::size_t ks_original, double f_original, double f_target) {
  if (ks_original < 1) throw ConfigError("original kernel size must be at least 1");
  step_size(f_original, f_target);
  const double ks = std::floor(double(ks_original) * f_target / f_original + kFloorSlack);
  if (ks < 1) {
    throw ConfigError(fmt::format("kernel {} at {} Hz shrinks below 1 sample at {} Hz", ks_original,
                                  f_original, f_target));
  }
  return std::size_t(ks);
}

ResamplePlan ResamplePlan::make(double f_original, double f_target, std::size_t source_len) {
  ResamplePlan plan;
  plan.f_original = f_original;
  plan.f_target = f_target;
  plan.step = step_size(f_original, f_target);
  plan.source_len = source_len;
  plan.target_len = target_length(source_len, plan.step);
  if (plan.target_len < 2) {
    throw ConfigError(fmt::format("{} samples at {} Hz leave fewer than 2 samples at {} Hz", source_len,
                                  f_original, f_target));
  }
  return plan;
}

KernelPlan KernelPlan::make(std::size_t ks_original, double f_original, double f_target) {
  return KernelPlan{ks_original, adaptive_kernel(ks_original, f_original, f_target), f_original, f_target};
}

} // namespace coss::resample
