#include "cfpi/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace cfpi::kernels {

namespace {

int initial_threads() {
  if (const char* env = std::getenv("CFPI_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{initial_threads()};
  return cap;
}

}  // namespace

int max_threads() { return thread_cap().load(std::memory_order_relaxed); }

void set_threads(int n) {
  thread_cap().store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

void linear_forward_serial(const double* W, const double* b, const double* x,
                           double* y, std::size_t B, std::size_t in,
                           std::size_t out) {
  for (std::size_t r = 0; r < B; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = W + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
}

void linear_forward_omp(const double* W, const double* b, const double* x,
                        double* y, std::size_t B, std::size_t in,
                        std::size_t out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(max_threads())
#endif
  for (long long r = 0; r < static_cast<long long>(B); ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * in;
    double* yr = y + static_cast<std::size_t>(r) * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = W + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
}

void linear_forward(const double* W, const double* b, const double* x,
                    double* y, std::size_t B, std::size_t in,
                    std::size_t out) {
  if (max_threads() > 1 && B > 1)
    linear_forward_omp(W, b, x, y, B, in, out);
  else
    linear_forward_serial(W, b, x, y, B, in, out);
}

void linear_backward_input_serial(const double* W, const double* dy,
                                  double* dx, std::size_t B, std::size_t in,
                                  std::size_t out) {
  for (std::size_t r = 0; r < B; ++r) {
    const double* dyr = dy + r * out;
    double* dxr = dx + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += W[o * in + i] * dyr[o];
      dxr[i] += acc;
    }
  }
}

void linear_backward_input_omp(const double* W, const double* dy, double* dx,
                               std::size_t B, std::size_t in,
                               std::size_t out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(max_threads())
#endif
  for (long long r = 0; r < static_cast<long long>(B); ++r) {
    const double* dyr = dy + static_cast<std::size_t>(r) * out;
    double* dxr = dx + static_cast<std::size_t>(r) * in;
    for (std::size_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += W[o * in + i] * dyr[o];
      dxr[i] += acc;
    }
  }
}

void linear_backward_input(const double* W, const double* dy, double* dx,
                           std::size_t B, std::size_t in, std::size_t out) {
  if (max_threads() > 1 && B > 1)
    linear_backward_input_omp(W, dy, dx, B, in, out);
  else
    linear_backward_input_serial(W, dy, dx, B, in, out);
}

void linear_backward_params_serial(const double* x, const double* dy,
                                   double* dW, double* db, std::size_t B,
                                   std::size_t in, std::size_t out) {
  for (std::size_t o = 0; o < out; ++o) {
    double* dWo = dW + o * in;
    double accb = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
      const double g = dy[r * out + o];
      accb += g;
      const double* xr = x + r * in;
      for (std::size_t i = 0; i < in; ++i) dWo[i] += g * xr[i];
    }
    db[o] += accb;
  }
}

void linear_backward_params_omp(const double* x, const double* dy, double* dW,
                                double* db, std::size_t B, std::size_t in,
                                std::size_t out) {
  // Parallel over output rows: each thread owns disjoint dW rows and db
  // entries, and sums over the batch in index order — bit-equal to serial.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(max_threads())
#endif
  for (long long o = 0; o < static_cast<long long>(out); ++o) {
    double* dWo = dW + static_cast<std::size_t>(o) * in;
    double accb = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
      const double g = dy[r * out + static_cast<std::size_t>(o)];
      accb += g;
      const double* xr = x + r * in;
      for (std::size_t i = 0; i < in; ++i) dWo[i] += g * xr[i];
    }
    db[o] += accb;
  }
}

void linear_backward_params(const double* x, const double* dy, double* dW,
                            double* db, std::size_t B, std::size_t in,
                            std::size_t out) {
  if (max_threads() > 1 && out > 1)
    linear_backward_params_omp(x, dy, dW, db, B, in, out);
  else
    linear_backward_params_serial(x, dy, dW, db, B, in, out);
}

}  // namespace cfpi::kernels
