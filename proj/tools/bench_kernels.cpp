// Compares the serial reference kernels with the dispatching versions that
// spread work across OpenMP threads. Prints one line per kernel and shape:
// serial time, dispatch time, the speedup, and whether the outputs stayed
// bitwise identical (they must, for every thread count).
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <omp.h>
#include <string>
#include <vector>

#include "mela/kernels.hpp"
#include "mela/rng.hpp"

using namespace mela;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_block(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, const std::string& shape, double t_serial,
            double t_dispatch, bool same) {
  std::printf("%-14s %-20s serial %9.3f us   dispatch %9.3f us   x%5.2f   %s\n",
              name, shape.c_str(), t_serial * 1e6, t_dispatch * 1e6,
              t_serial / t_dispatch, same ? "bitwise-equal" : "MISMATCH");
}

void bench_matmul(Rng& rng, std::size_t n, std::size_t k, std::size_t m,
                  int reps) {
  const auto a = random_block(rng, n * k);
  const auto b = random_block(rng, k * m);
  std::vector<double> c_serial(n * m), c_dispatch(n * m);
  const double ts = time_of(
      [&] { kern::matmul_nn_serial(a.data(), b.data(), c_serial.data(), n, k, m, false); },
      reps);
  const double td = time_of(
      [&] { kern::matmul_nn(a.data(), b.data(), c_dispatch.data(), n, k, m, false); },
      reps);
  report("matmul_nn", std::to_string(n) + "x" + std::to_string(k) + "x" + std::to_string(m),
         ts, td, bitwise_equal(c_serial, c_dispatch));
}

void bench_leaky(Rng& rng, std::size_t n, int reps) {
  const auto x = random_block(rng, n);
  std::vector<double> y_serial(n), y_dispatch(n);
  const double ts =
      time_of([&] { kern::leaky_relu_serial(x.data(), y_serial.data(), n, 0.3); }, reps);
  const double td =
      time_of([&] { kern::leaky_relu(x.data(), y_dispatch.data(), n, 0.3); }, reps);
  report("leaky_relu", std::to_string(n), ts, td, bitwise_equal(y_serial, y_dispatch));
}

void bench_adam(Rng& rng, std::size_t n, int reps) {
  const auto grad = random_block(rng, n);
  const auto p0 = random_block(rng, n);
  std::vector<double> ps = p0, pd = p0, ms(n, 0.0), vs(n, 0.0), md(n, 0.0),
                      vd(n, 0.0);
  const double ts = time_of(
      [&] {
        kern::adam_update_serial(ps.data(), grad.data(), ms.data(), vs.data(), n,
                                 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001999);
      },
      reps);
  const double td = time_of(
      [&] {
        kern::adam_update(pd.data(), grad.data(), md.data(), vd.data(), n, 1e-3,
                          0.9, 0.999, 1e-8, 0.1, 0.001999);
      },
      reps);
  // Both sides ran the same number of updates from the same start, so the
  // trajectories must agree exactly.
  report("adam_update", std::to_string(n), ts, td, bitwise_equal(ps, pd));
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 20;
  if (argc > 1) reps = std::max(1, std::atoi(argv[1]));
  std::printf("threads available: %d   reps per timing: %d\n",
              omp_get_max_threads(), reps);

  Rng rng(2024);
  bench_matmul(rng, 8, 8, 8, reps * 10);       // below the parallel threshold
  bench_matmul(rng, 64, 64, 64, reps);
  bench_matmul(rng, 256, 256, 256, reps);
  bench_matmul(rng, 1024, 200, 60, reps);      // recognition-block shape
  bench_leaky(rng, 1 << 10, reps * 10);
  bench_leaky(rng, 1 << 20, reps);
  bench_adam(rng, 1 << 10, reps * 10);
  bench_adam(rng, 1 << 20, reps);
  return 0;
}
