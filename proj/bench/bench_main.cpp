// Compares the serial reference kernels against the OpenMP versions: checks
// bit-level parity on random inputs, then times both on training-shaped
// workloads. Run manually: build/bench/cfpi_bench [reps]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "cfpi/kernels.hpp"
#include "cfpi/rng.hpp"

using namespace cfpi;

namespace {

double now_s() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

struct Case {
  std::size_t B, in, out;
};

void fill(Rng& rng, std::vector<double>& v) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 200;
  const Case cases[] = {{128, 64, 64}, {256, 64, 64}, {256, 6, 64},
                        {256, 64, 8},  {1024, 64, 64}};
  std::printf("threads: %d, reps per case: %d\n", kernels::max_threads(), reps);
  std::printf("%-18s %10s %12s %12s %8s %7s\n", "kernel", "shape", "serial",
              "openmp", "speedup", "parity");

  Rng rng(987654);
  bool all_equal = true;
  for (const Case& c : cases) {
    std::vector<double> W(c.out * c.in), b(c.out), x(c.B * c.in),
        dy(c.B * c.out);
    fill(rng, W);
    fill(rng, b);
    fill(rng, x);
    fill(rng, dy);
    char shape[32];
    std::snprintf(shape, sizeof shape, "%zux%zux%zu", c.B, c.in, c.out);

    {  // forward
      std::vector<double> y1(c.B * c.out), y2(c.B * c.out);
      double t0 = now_s();
      for (int r = 0; r < reps; ++r)
        kernels::linear_forward_serial(W.data(), b.data(), x.data(), y1.data(),
                                       c.B, c.in, c.out);
      double ts = now_s() - t0;
      t0 = now_s();
      for (int r = 0; r < reps; ++r)
        kernels::linear_forward_omp(W.data(), b.data(), x.data(), y2.data(),
                                    c.B, c.in, c.out);
      double tp = now_s() - t0;
      const bool eq = bit_equal(y1, y2);
      all_equal = all_equal && eq;
      std::printf("%-18s %10s %9.3f ms %9.3f ms %7.2fx %7s\n", "forward",
                  shape, ts / reps * 1e3, tp / reps * 1e3, ts / tp,
                  eq ? "exact" : "DIFF");
    }
    {  // backward wrt input
      std::vector<double> dx1(c.B * c.in, 0.0), dx2(c.B * c.in, 0.0);
      double t0 = now_s();
      for (int r = 0; r < reps; ++r)
        kernels::linear_backward_input_serial(W.data(), dy.data(), dx1.data(),
                                              c.B, c.in, c.out);
      double ts = now_s() - t0;
      t0 = now_s();
      for (int r = 0; r < reps; ++r)
        kernels::linear_backward_input_omp(W.data(), dy.data(), dx2.data(),
                                           c.B, c.in, c.out);
      double tp = now_s() - t0;
      const bool eq = bit_equal(dx1, dx2);
      all_equal = all_equal && eq;
      std::printf("%-18s %10s %9.3f ms %9.3f ms %7.2fx %7s\n",
                  "backward-input", shape, ts / reps * 1e3, tp / reps * 1e3,
                  ts / tp, eq ? "exact" : "DIFF");
    }
    {  // backward wrt params
      std::vector<double> dW1(c.out * c.in, 0.0), dW2(c.out * c.in, 0.0);
      std::vector<double> db1(c.out, 0.0), db2(c.out, 0.0);
      double t0 = now_s();
      for (int r = 0; r < reps; ++r)
        kernels::linear_backward_params_serial(x.data(), dy.data(), dW1.data(),
                                               db1.data(), c.B, c.in, c.out);
      double ts = now_s() - t0;
      t0 = now_s();
      for (int r = 0; r < reps; ++r)
        kernels::linear_backward_params_omp(x.data(), dy.data(), dW2.data(),
                                            db2.data(), c.B, c.in, c.out);
      double tp = now_s() - t0;
      const bool eq = bit_equal(dW1, dW2) && bit_equal(db1, db2);
      all_equal = all_equal && eq;
      std::printf("%-18s %10s %9.3f ms %9.3f ms %7.2fx %7s\n",
                  "backward-params", shape, ts / reps * 1e3, tp / reps * 1e3,
                  ts / tp, eq ? "exact" : "DIFF");
    }
  }
  std::printf("parity: %s\n", all_equal ? "all outputs bit-identical"
                                        : "MISMATCH DETECTED");
  return all_equal ? 0 : 1;
}
