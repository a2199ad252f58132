#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cfpi::kernels {

// Worker cap: CFPI_THREADS env var if set, otherwise the OpenMP default.
// set_threads() overrides at runtime (benchmark + parity tests).
int max_threads();
void set_threads(int n);

// Batched dense layer kernels. Each has a plain serial reference and an
// OpenMP version; the OpenMP loops are split so every output element is
// written by exactly one thread with a fixed-order inner reduction, which
// makes results bit-identical to the serial path at any thread count.
//
// Layouts (row-major): x is B x in, W is out x in, y is B x out.

// y = x W^T + b
void linear_forward_serial(const double* W, const double* b, const double* x,
                           double* y, std::size_t B, std::size_t in,
                           std::size_t out);
void linear_forward_omp(const double* W, const double* b, const double* x,
                        double* y, std::size_t B, std::size_t in,
                        std::size_t out);
void linear_forward(const double* W, const double* b, const double* x,
                    double* y, std::size_t B, std::size_t in, std::size_t out);

// dx += dy W  (accumulating)
void linear_backward_input_serial(const double* W, const double* dy,
                                  double* dx, std::size_t B, std::size_t in,
                                  std::size_t out);
void linear_backward_input_omp(const double* W, const double* dy, double* dx,
                               std::size_t B, std::size_t in, std::size_t out);
void linear_backward_input(const double* W, const double* dy, double* dx,
                           std::size_t B, std::size_t in, std::size_t out);

// dW += dy^T x, db += column sums of dy  (accumulating)
void linear_backward_params_serial(const double* x, const double* dy,
                                   double* dW, double* db, std::size_t B,
                                   std::size_t in, std::size_t out);
void linear_backward_params_omp(const double* x, const double* dy, double* dW,
                                double* db, std::size_t B, std::size_t in,
                                std::size_t out);
void linear_backward_params(const double* x, const double* dy, double* dW,
                            double* db, std::size_t B, std::size_t in,
                            std::size_t out);

// Index-parallel loop for coarse work items (episodes, bootstrap resamples).
// fn(i) must touch only per-i state; randomness inside must come from a
// stream forked on i. Then scheduling cannot change any result.
template <typename F>
void parallel_for(std::size_t n, F&& fn) {
#ifdef _OPENMP
  if (max_threads() > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (long long i = 0; i < static_cast<long long>(n); ++i)
      fn(static_cast<std::size_t>(i));
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace cfpi::kernels
