// Serial reference kernels. Each output element is computed directly from its
// defining sum; kept for verification of the parallel kernels and for the
// instrumented multiply count used by the cost model tests.

#include "coss/kernels.hpp"

namespace coss::kernels::reference {

namespace {
thread_local std::uint64_t tl_multiplies = 0;
}

std::uint64_t multiply_count() noexcept { return tl_multiplies; }
void reset_multiply_count() noexcept { tl_multiplies = 0; }

void conv1d_forward(const ConvDims& d, std::span<const Real> input, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> output) {
  const std::size_t lout = d.out_length();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.out_channels; ++o)
      for (std::size_t t = 0; t < lout; ++t) {
        Real acc = bias[o];
        for (std::size_t c = 0; c < d.in_channels; ++c)
          for (std::size_t k = 0; k < d.kernel; ++k) {
            acc += input[(b * d.in_channels + c) * d.length + t + k] *
                   weight[(o * d.in_channels + c) * d.kernel + k];
            ++tl_multiplies;
          }
        output[(b * d.out_channels + o) * lout + t] = acc;
      }
}

void conv1d_backward_input(const ConvDims& d, std::span<const Real> grad_output,
                           std::span<const Real> weight, std::span<Real> grad_input) {
  const std::size_t lout = d.out_length();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t c = 0; c < d.in_channels; ++c)
      for (std::size_t s = 0; s < d.length; ++s) {
        // input[s] feeds out[t] through tap k = s - t
        Real acc = 0;
        for (std::size_t o = 0; o < d.out_channels; ++o)
          for (std::size_t k = 0; k < d.kernel; ++k) {
            if (s < k || s - k >= lout) continue;
            acc += grad_output[(b * d.out_channels + o) * lout + (s - k)] *
                   weight[(o * d.in_channels + c) * d.kernel + k];
          }
        grad_input[(b * d.in_channels + c) * d.length + s] = acc;
      }
}

void conv1d_backward_params(const ConvDims& d, std::span<const Real> grad_output,
                            std::span<const Real> input, std::span<Real> grad_weight,
                            std::span<Real> grad_bias) {
  const std::size_t lout = d.out_length();
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    for (std::size_t c = 0; c < d.in_channels; ++c)
      for (std::size_t k = 0; k < d.kernel; ++k) {
        Real acc = 0;
        for (std::size_t b = 0; b < d.batch; ++b)
          for (std::size_t t = 0; t < lout; ++t)
            acc += grad_output[(b * d.out_channels + o) * lout + t] *
                   input[(b * d.in_channels + c) * d.length + t + k];
        grad_weight[(o * d.in_channels + c) * d.kernel + k] = acc;
      }
    Real acc = 0;
    for (std::size_t b = 0; b < d.batch; ++b)
      for (std::size_t t = 0; t < lout; ++t) acc += grad_output[(b * d.out_channels + o) * lout + t];
    grad_bias[o] = acc;
  }
}

void dense_forward(const DenseDims& d, std::span<const Real> x, std::span<const Real> weight,
                   std::span<const Real> bias, std::span<Real> y) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.out_features; ++o) {
      Real acc = bias[o];
      for (std::size_t i = 0; i < d.in_features; ++i) {
        acc += x[b * d.in_features + i] * weight[o * d.in_features + i];
        ++tl_multiplies;
      }
      y[b * d.out_features + o] = acc;
    }
}

void dense_backward_input(const DenseDims& d, std::span<const Real> grad_y,
                          std::span<const Real> weight, std::span<Real> grad_x) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t i = 0; i < d.in_features; ++i) {
      Real acc = 0;
      for (std::size_t o = 0; o < d.out_features; ++o)
        acc += grad_y[b * d.out_features + o] * weight[o * d.in_features + i];
      grad_x[b * d.in_features + i] = acc;
    }
}

void dense_backward_params(const DenseDims& d, std::span<const Real> grad_y,
                           std::span<const Real> x, std::span<Real> grad_weight,
                           std::span<Real> grad_bias) {
  for (std::size_t o = 0; o < d.out_features; ++o) {
    for (std::size_t i = 0; i < d.in_features; ++i) {
      Real acc = 0;
      for (std::size_t b = 0; b < d.batch; ++b)
        acc += grad_y[b * d.out_features + o] * x[b * d.in_features + i];
      grad_weight[o * d.in_features + i] = acc;
    }
    Real acc = 0;
    for (std::size_t b = 0; b < d.batch; ++b) acc += grad_y[b * d.out_features + o];
    grad_bias[o] = acc;
  }
}

} // namespace coss::kernels::reference
