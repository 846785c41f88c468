#include "coss/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace coss::kernels {

namespace {
thread_local Backend tl_backend = Backend::omp;

using Index = std::ptrdiff_t;
} // namespace

Backend current_backend() noexcept { return tl_backend; }

ScopedBackend::ScopedBackend(Backend backend) noexcept : previous_(tl_backend) {
  tl_backend = backend;
}
ScopedBackend::~ScopedBackend() { tl_backend = previous_; }

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) noexcept {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace omp {

namespace {

constexpr std::size_t kTile = 8;    // output positions held in registers
constexpr std::size_t kOutBlock = 4; // output channels sharing one input load

// y[o, t] = init[o] + sum_{c,k} w[o, c, k] x[c, t + k] for one batch row.
// w is [cout, cin, ks] with row stride w_stride; x rows are xlen long.
// Each output is summed over (c, k) in ascending order.
void correlate_row(const Real* __restrict x, std::size_t cin, std::size_t xlen, const Real* __restrict w,
                   std::size_t cout, std::size_t ks, const Real* init, Real* __restrict y, std::size_t lout) {
  const std::size_t w_stride = cin * ks;
  std::size_t o = 0;
  for (; o + kOutBlock <= cout; o += kOutBlock) {
    std::size_t t0 = 0;
    for (; t0 + kTile <= lout; t0 += kTile) {
      Real acc[kOutBlock][kTile];
      for (std::size_t ob = 0; ob < kOutBlock; ++ob)
        for (std::size_t tt = 0; tt < kTile; ++tt) acc[ob][tt] = init ? init[o + ob] : Real(0);
      for (std::size_t c = 0; c < cin; ++c) {
        const Real* xr = x + c * xlen + t0;
        for (std::size_t k = 0; k < ks; ++k) {
          for (std::size_t ob = 0; ob < kOutBlock; ++ob) {
            const Real wv = w[(o + ob) * w_stride + c * ks + k];
#pragma omp simd
            for (std::size_t tt = 0; tt < kTile; ++tt) acc[ob][tt] += wv * xr[k + tt];
          }
        }
      }
      for (std::size_t ob = 0; ob < kOutBlock; ++ob)
        for (std::size_t tt = 0; tt < kTile; ++tt) y[(o + ob) * lout + t0 + tt] = acc[ob][tt];
    }
    for (std::size_t ob = 0; ob < kOutBlock; ++ob) {
      for (std::size_t t = t0; t < lout; ++t) {
        Real acc = init ? init[o + ob] : Real(0);
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t k = 0; k < ks; ++k) acc += w[(o + ob) * w_stride + c * ks + k] * x[c * xlen + t + k];
        y[(o + ob) * lout + t] = acc;
      }
    }
  }
  for (; o < cout; ++o) {
    for (std::size_t t = 0; t < lout; ++t) {
      Real acc = init ? init[o] : Real(0);
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t k = 0; k < ks; ++k) acc += w[o * w_stride + c * ks + k] * x[c * xlen + t + k];
      y[o * lout + t] = acc;
    }
  }
}

} // namespace

void conv1d_forward(const ConvDims& d, std::span<const Real> input, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> output) {
  const Index batch = Index(d.batch);
  const std::size_t cin = d.in_channels, cout = d.out_channels, len = d.length, lout = d.out_length();
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < batch; ++b) {
    correlate_row(input.data() + std::size_t(b) * cin * len, cin, len, weight.data(), cout, d.kernel, bias.data(),
                  output.data() + std::size_t(b) * cout * lout, lout);
  }
}

// The input gradient is a full correlation of the output gradient with the
// flipped, channel-transposed kernel: pad gy by ks-1 zeros on both sides.
void conv1d_backward_input(const ConvDims& d, std::span<const Real> grad_output,
                           std::span<const Real> weight, std::span<Real> grad_input) {
  const Index batch = Index(d.batch);
  const std::size_t cin = d.in_channels, cout = d.out_channels, len = d.length, ks = d.kernel,
                    lout = d.out_length();
  const std::size_t plen = lout + 2 * (ks - 1);
  std::vector<Real> flipped(cin * cout * ks);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < ks; ++k) flipped[(c * cout + o) * ks + (ks - 1 - k)] = weight[(o * cin + c) * ks + k];
#pragma omp parallel
  {
    std::vector<Real> padded(cout * plen, Real(0));
#pragma omp for schedule(static)
    for (Index b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        const Real* gy = grad_output.data() + (std::size_t(b) * cout + o) * lout;
        std::copy(gy, gy + lout, padded.data() + o * plen + (ks - 1));
      }
      correlate_row(padded.data(), cout, plen, flipped.data(), cin, ks, nullptr,
                    grad_input.data() + std::size_t(b) * cin * len, len);
    }
  }
}

void conv1d_backward_params(const ConvDims& d, std::span<const Real> grad_output,
                            std::span<const Real> input, std::span<Real> grad_weight,
                            std::span<Real> grad_bias) {
  const Index cout = Index(d.out_channels);
  const std::size_t cin = d.in_channels, batch = d.batch, len = d.length, ks = d.kernel, lout = d.out_length();
  const Real* __restrict go = grad_output.data();
  const Real* __restrict in = input.data();
  Real* __restrict gw = grad_weight.data();
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < cout; ++o) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t k = 0; k < ks; ++k) {
        Real acc = 0;
        for (std::size_t b = 0; b < batch; ++b) {
          const Real* gy = go + (b * d.out_channels + std::size_t(o)) * lout;
          const Real* x = in + (b * cin + c) * len + k;
          Real part = 0;
#pragma omp simd reduction(+ : part)
          for (std::size_t t = 0; t < lout; ++t) part += gy[t] * x[t];
          acc += part;
        }
        gw[(std::size_t(o) * cin + c) * ks + k] = acc;
      }
    }
    Real acc = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const Real* gy = go + (b * d.out_channels + std::size_t(o)) * lout;
      Real part = 0;
#pragma omp simd reduction(+ : part)
      for (std::size_t t = 0; t < lout; ++t) part += gy[t];
      acc += part;
    }
    grad_bias[std::size_t(o)] = acc;
  }
}

void dense_forward(const DenseDims& d, std::span<const Real> x, std::span<const Real> weight,
                   std::span<const Real> bias, std::span<Real> y) {
  const Index batch = Index(d.batch), dout = Index(d.out_features);
  const std::size_t din = d.in_features;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < batch; ++b) {
    for (Index o = 0; o < dout; ++o) {
      const Real* xr = x.data() + std::size_t(b) * din;
      const Real* wr = weight.data() + std::size_t(o) * din;
      Real acc = bias[std::size_t(o)];
      for (std::size_t i = 0; i < din; ++i) acc += xr[i] * wr[i];
      y[std::size_t(b) * d.out_features + std::size_t(o)] = acc;
    }
  }
}

void dense_backward_input(const DenseDims& d, std::span<const Real> grad_y,
                          std::span<const Real> weight, std::span<Real> grad_x) {
  const Index batch = Index(d.batch);
  const std::size_t din = d.in_features, dout = d.out_features;
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < batch; ++b) {
    Real* gx = grad_x.data() + std::size_t(b) * din;
    std::fill(gx, gx + din, Real(0));
    for (std::size_t o = 0; o < dout; ++o) {
      const Real g = grad_y[std::size_t(b) * dout + o];
      const Real* wr = weight.data() + o * din;
      for (std::size_t i = 0; i < din; ++i) gx[i] += g * wr[i];
    }
  }
}

void dense_backward_params(const DenseDims& d, std::span<const Real> grad_y,
                           std::span<const Real> x, std::span<Real> grad_weight,
                           std::span<Real> grad_bias) {
  const Index dout = Index(d.out_features);
  const std::size_t din = d.in_features, batch = d.batch;
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < dout; ++o) {
    Real* gw = grad_weight.data() + std::size_t(o) * din;
    std::fill(gw, gw + din, Real(0));
    Real gb = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const Real g = grad_y[b * d.out_features + std::size_t(o)];
      const Real* xr = x.data() + b * din;
      for (std::size_t i = 0; i < din; ++i) gw[i] += g * xr[i];
      gb += g;
    }
    grad_bias[std::size_t(o)] = gb;
  }
}

} // namespace omp

#define COSS_DISPATCH(fn, ...)                                                                    \
  do {                                                                                            \
    if (tl_backend == Backend::reference)                                                         \
      reference::fn(__VA_ARGS__);                                                                 \
    else                                                                                          \
      omp::fn(__VA_ARGS__);                                                                       \
  } while (0)

void conv1d_forward(const ConvDims& d, std::span<const Real> input, std::span<const Real> weight,
                    std::span<const Real> bias, std::span<Real> output) {
  COSS_DISPATCH(conv1d_forward, d, input, weight, bias, output);
}

void conv1d_backward_input(const ConvDims& d, std::span<const Real> grad_output,
                           std::span<const Real> weight, std::span<Real> grad_input) {
  COSS_DISPATCH(conv1d_backward_input, d, grad_output, weight, grad_input);
}

void conv1d_backward_params(const ConvDims& d, std::span<const Real> grad_output,
                            std::span<const Real> input, std::span<Real> grad_weight,
                            std::span<Real> grad_bias) {
  COSS_DISPATCH(conv1d_backward_params, d, grad_output, input, grad_weight, grad_bias);
}

void dense_forward(const DenseDims& d, std::span<const Real> x, std::span<const Real> weight,
                   std::span<const Real> bias, std::span<Real> y) {
  COSS_DISPATCH(dense_forward, d, x, weight, bias, y);
}

void dense_backward_input(const DenseDims& d, std::span<const Real> grad_y,
                          std::span<const Real> weight, std::span<Real> grad_x) {
  COSS_DISPATCH(dense_backward_input, d, grad_y, weight, grad_x);
}

void dense_backward_params(const DenseDims& d, std::span<const Real> grad_y,
                           std::span<const Real> x, std::span<Real> grad_weight,
                           std::span<Real> grad_bias) {
  COSS_DISPATCH(dense_backward_params, d, grad_y, x, grad_weight, grad_bias);
}

#undef COSS_DISPATCH

} // namespace coss::kernels
