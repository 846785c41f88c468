#pragma once

// Downsampling of sensor windows to arbitrary (fractional) target rates by
// linear interpolation, and kernel sizing that keeps every branch's receptive
// field at the same duration in seconds.

#include <cstddef>
#include <span>
#include <vector>

#include "coss/tensor.hpp"

namespace coss::resample {

/// S = f_original / f_target. Throws ConfigError for non-positive rates or upsampling.
double step_size(double f_original, double f_target);

/// floor((source_len - 1) / step) + 1: the longest output whose interpolation
/// indices stay inside the source.
std::size_t target_length(std::size_t source_len, double step);

/// TD[i] = OD[floor(iS)] + (iS - floor(iS)) * (OD[ceil(iS)] - OD[floor(iS)]).
std::vector<Real> resample_series(std::span<const Real> source, double step);

/// Applies resample_series along the last axis of a tensor of any rank >= 1.
Tensor resample_last_axis(const Tensor& source, double step);

/// floor(ks_original * f_target / f_original); ConfigError when it drops below 1.
std::size_t adaptive_kernel(std::size_t ks_original, double f_original, double f_target);

struct ResamplePlan {
  double f_original = 0;
  double f_target = 0;
  double step = 1;
  std::size_t source_len = 0;
  std::size_t target_len = 0;

  /// Validates rates and requires target_len >= 2.
  static ResamplePlan make(double f_original, double f_target, std::size_t source_len);
};

struct KernelPlan {
  std::size_t ks_original = 0;
  std::size_t ks_target = 0;
  double f_original = 0;
  double f_target = 0;

  static KernelPlan make(std::size_t ks_original, double f_original, double f_target);
};

} // namespace coss::resample
