// Times the OpenMP kernels against the serial reference kernels on layer
// shapes typical of the encoder branches, and reports the largest deviation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "coss/kernels.hpp"

using namespace coss;
namespace k = coss::kernels;

namespace {

std::vector<Real> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Real> v(n);
  for (auto& x : v) x = Real(u(rng));
  return v;
}

double seconds_per_call(const std::function<void()>& fn, double min_seconds) {
  using clock = std::chrono::steady_clock;
  fn(); // warm-up
  std::size_t calls = 0;
  const auto start = clock::now();
  double elapsed = 0;
  do {
    fn();
    ++calls;
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
  } while (elapsed < min_seconds);
  return elapsed / double(calls);
}

double max_abs_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

struct Row {
  std::string name;
  double omp_s, ref_s, gmacs, diff;
};

void print(const Row& r) {
  fmt::print("{:<34} {:>10.1f} {:>10.1f} {:>8.2f}x {:>8.2f} {:>10.2e}\n", r.name, r.omp_s * 1e6, r.ref_s * 1e6,
             r.ref_s / r.omp_s, r.gmacs / r.omp_s * 1e-9, r.diff);
}

Row conv_case(const k::ConvDims& d, double min_s, std::mt19937_64& rng) {
  const auto x = random_vec(d.input_size(), rng);
  const auto w = random_vec(d.weight_size(), rng);
  const auto b = random_vec(d.out_channels, rng);
  const auto gy = random_vec(d.output_size(), rng);
  std::vector<Real> y1(d.output_size()), y2(d.output_size());
  std::vector<Real> gx1(d.input_size()), gx2(d.input_size());
  std::vector<Real> gw1(d.weight_size()), gw2(d.weight_size()), gb1(d.out_channels), gb2(d.out_channels);

  auto run_omp = [&] {
    k::omp::conv1d_forward(d, x, w, b, y1);
    k::omp::conv1d_backward_input(d, gy, w, gx1);
    k::omp::conv1d_backward_params(d, gy, x, gw1, gb1);
  };
  auto run_ref = [&] {
    k::reference::conv1d_forward(d, x, w, b, y2);
    k::reference::conv1d_backward_input(d, gy, w, gx2);
    k::reference::conv1d_backward_params(d, gy, x, gw2, gb2);
  };
  Row r;
  r.name = fmt::format("conv b{} c{}->{} L{} k{}", d.batch, d.in_channels, d.out_channels, d.length, d.kernel);
  r.omp_s = seconds_per_call(run_omp, min_s);
  r.ref_s = seconds_per_call(run_ref, min_s);
  r.gmacs = 3.0 * double(d.batch * d.in_channels * d.out_channels * d.kernel * d.out_length());
  r.diff = std::max({max_abs_diff(y1, y2), max_abs_diff(gx1, gx2), max_abs_diff(gw1, gw2), max_abs_diff(gb1, gb2)});
  return r;
}

Row dense_case(const k::DenseDims& d, double min_s, std::mt19937_64& rng) {
  const auto x = random_vec(d.batch * d.in_features, rng);
  const auto w = random_vec(d.out_features * d.in_features, rng);
  const auto b = random_vec(d.out_features, rng);
  const auto gy = random_vec(d.batch * d.out_features, rng);
  std::vector<Real> y1(d.batch * d.out_features), y2(y1.size());
  std::vector<Real> gx1(x.size()), gx2(x.size()), gw1(w.size()), gw2(w.size()), gb1(b.size()), gb2(b.size());
  auto run_omp = [&] {
    k::omp::dense_forward(d, x, w, b, y1);
    k::omp::dense_backward_input(d, gy, w, gx1);
    k::omp::dense_backward_params(d, gy, x, gw1, gb1);
  };
  auto run_ref = [&] {
    k::reference::dense_forward(d, x, w, b, y2);
    k::reference::dense_backward_input(d, gy, w, gx2);
    k::reference::dense_backward_params(d, gy, x, gw2, gb2);
  };
  Row r;
  r.name = fmt::format("dense b{} {}->{}", d.batch, d.in_features, d.out_features);
  r.omp_s = seconds_per_call(run_omp, min_s);
  r.ref_s = seconds_per_call(run_ref, min_s);
  r.gmacs = 3.0 * double(d.batch * d.in_features * d.out_features);
  r.diff = std::max({max_abs_diff(y1, y2), max_abs_diff(gx1, gx2), max_abs_diff(gw1, gw2), max_abs_diff(gb1, gb2)});
  return r;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: OpenMP vs serial reference (forward + both backward passes)"};
  double min_seconds = 0.2;
  std::size_t batch = 32;
  int threads = 0;
  app.add_option("--min-seconds", min_seconds, "Minimum timing window per measurement");
  app.add_option("--batch", batch, "Batch size");
  app.add_option("--threads", threads, "OpenMP threads (0 keeps the default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) k::set_num_threads(threads);

  std::mt19937_64 rng(7);
  fmt::print("threads: {}\n", k::max_threads());
  fmt::print("{:<34} {:>10} {:>10} {:>9} {:>8} {:>10}\n", "case", "omp us", "ref us", "speedup", "GMAC/s", "max diff");
  for (auto [cin, cout, len, ks] : std::vector<std::array<std::size_t, 4>>{
           {1, 16, 80, 8}, {16, 16, 73, 8}, {16, 16, 40, 4}, {16, 16, 20, 2}, {3, 100, 200, 20}, {100, 100, 181, 20}}) {
    print(conv_case({batch, cin, len, cout, ks}, min_seconds, rng));
  }
  for (auto [in, out] : std::vector<std::array<std::size_t, 2>>{{16, 32}, {100, 128}, {128, 12}}) {
    print(dense_case({batch, in, out}, min_seconds, rng));
  }
  return 0;
}
