#pragma once

// Numeric kernels for the convolution and dense layers.
//
// Two implementations share one signature set:
//   kernels::omp        OpenMP-parallel, cache-friendly loop order. Used by default.
//   kernels::reference  straight transcription of the defining sums, serial,
//                       and instrumented with a multiply counter.
// The dispatching functions in kernels:: pick one according to the
// thread-local backend, see ScopedBackend.
//
// Every parallel loop writes disjoint outputs and reduces in a fixed order,
// so results are bit-identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

#include "coss/tensor.hpp"

namespace coss::kernels {

struct ConvDims {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t length = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;

  std::size_t out_length() const noexcept { return length - kernel + 1; }
  std::size_t input_size() const noexcept { return batch * in_channels * length; }
  std::size_t weight_size() const noexcept { return out_channels * in_channels * kernel; }
  std::size_t output_size() const noexcept { return batch * out_channels * out_length(); }
};

struct DenseDims {
  std::size_t batch = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

enum class Backend { omp, reference };

Backend current_backend() noexcept;

/// Switches the calling thread's kernel backend for the lifetime of the guard.
class ScopedBackend {
public:
  explicit ScopedBackend(Backend backend) noexcept;
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
  Backend previous_;
};

int max_threads() noexcept;
void set_num_threads(int n) noexcept;

#define COSS_KERNEL_DECLS                                                                        \
  void conv1d_forward(const ConvDims& d, std::span<const Real> input, std::span<const Real> weight, \
                      std::span<const Real> bias, std::span<Real> output);                       \
  void conv1d_backward_input(const ConvDims& d, std::span<const Real> grad_output,                \
                             std::span<const Real> weight, std::span<Real> grad_input);           \
  void conv1d_backward_params(const ConvDims& d, std::span<const Real> grad_output,               \
                              std::span<const Real> input, std::span<Real> grad_weight,           \
                              std::span<Real> grad_bias);                                         \
  void dense_forward(const DenseDims& d, std::span<const Real> x, std::span<const Real> weight,   \
                     std::span<const Real> bias, std::span<Real> y);                              \
  void dense_backward_input(const DenseDims& d, std::span<const Real> grad_y,                     \
                            std::span<const Real> weight, std::span<Real> grad_x);                \
  void dense_backward_params(const DenseDims& d, std::span<const Real> grad_y,                    \
                             std::span<const Real> x, std::span<Real> grad_weight,                \
                             std::span<Real> grad_bias);

// Output buffers are overwritten, never accumulated into.
COSS_KERNEL_DECLS

namespace omp {
COSS_KERNEL_DECLS
}

namespace reference {
COSS_KERNEL_DECLS

/// Multiplications performed by the reference forward kernels on this thread.
std::uint64_t multiply_count() noexcept;
void reset_multiply_count() noexcept;
} // namespace reference

#undef COSS_KERNEL_DECLS

} // namespace coss::kernels
