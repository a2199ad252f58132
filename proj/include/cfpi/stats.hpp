#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cfpi/rng.hpp"

namespace cfpi {

// Final scores for a grid of tasks x seeds, task-major.
struct RunMatrix {
  std::size_t n_tasks = 0;
  std::size_t n_seeds = 0;
  std::vector<double> scores;

  double score(std::size_t task, std::size_t seed) const {
    return scores[task * n_seeds + seed];
  }
  double& score(std::size_t task, std::size_t seed) {
    return scores[task * n_seeds + seed];
  }
  void validate() const;
};

// Interquartile mean with fractional endpoint weights: exactly 25% of the
// sample mass is trimmed from each tail even when n is not divisible by 4.
double iqm(std::span<const double> values);

// Sample median (midpoint average for even n).
double median(std::span<const double> values);

// IQM pooled over every run in the matrix.
double iqm_of(const RunMatrix& m);

// Mean over runs of max(0, target - score).
double optimality_gap(const RunMatrix& m, double target = 100.0);

// For each threshold, the fraction of seeds scoring at least that much,
// averaged over tasks so each task weighs equally. Nonincreasing in the
// threshold; 1 at or below the minimum score, 0 above the maximum.
std::vector<double> performance_profile(const RunMatrix& m,
                                        std::span<const double> thresholds);

struct ConfInterval {
  double lo = 0.0;
  double hi = 0.0;
};

using MatrixStatistic = std::function<double(const RunMatrix&)>;

// Percentile bootstrap that resamples seeds independently within each task
// (tasks are strata). Each resample draws from its own stream forked on the
// resample index, so the interval is reproducible at any thread count.
ConfInterval stratified_bootstrap_ci(const RunMatrix& m,
                                     const MatrixStatistic& stat,
                                     std::size_t n_resamples,
                                     double confidence, const Rng& rng);

}  // namespace cfpi
