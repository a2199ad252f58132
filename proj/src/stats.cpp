#include "cfpi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfpi/kernels.hpp"

namespace cfpi {

void RunMatrix::validate() const {
  if (n_tasks == 0 || n_seeds == 0)
    throw std::invalid_argument("RunMatrix: empty");
  if (scores.size() != n_tasks * n_seeds)
    throw std::invalid_argument("RunMatrix: score count mismatch");
  for (double v : scores)
    if (!std::isfinite(v))
      throw std::invalid_argument("RunMatrix: non-finite score");
}

double iqm(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("iqm: empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  const double trim = 0.25 * n;
  // Sorted value i occupies mass [i, i+1); keep the overlap with the
  // untrimmed band [trim, n - trim]. The kept mass always sums to n/2.
  double wsum = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double lo = std::max(static_cast<double>(i), trim);
    const double hi = std::min(static_cast<double>(i + 1), n - trim);
    const double w = std::clamp(hi - lo, 0.0, 1.0);
    wsum += w;
    acc += w * v[i];
  }
  return acc / wsum;
}

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double iqm_of(const RunMatrix& m) {
  m.validate();
  return iqm(m.scores);
}

double optimality_gap(const RunMatrix& m, double target) {
  m.validate();
  double acc = 0.0;
  for (double v : m.scores) acc += std::max(0.0, target - v);
  return acc / static_cast<double>(m.scores.size());
}

std::vector<double> performance_profile(const RunMatrix& m,
                                        std::span<const double> thresholds) {
  m.validate();
  std::vector<double> out(thresholds.size(), 0.0);
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    double acc = 0.0;
    for (std::size_t t = 0; t < m.n_tasks; ++t) {
      std::size_t hits = 0;
      for (std::size_t s = 0; s < m.n_seeds; ++s)
        if (m.score(t, s) >= thresholds[j]) ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(m.n_seeds);
    }
    out[j] = acc / static_cast<double>(m.n_tasks);
  }
  return out;
}

namespace {

// Quantile of a sorted sample, linearly interpolated between order
// statistics (the common "type 7" rule).
double sorted_quantile(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(i);
  return v[i] + frac * (v[i + 1] - v[i]);
}

}  // namespace

ConfInterval stratified_bootstrap_ci(const RunMatrix& m,
                                     const MatrixStatistic& stat,
                                     std::size_t n_resamples,
                                     double confidence, const Rng& rng) {
  m.validate();
  if (n_resamples < 2)
    throw std::invalid_argument("bootstrap: need at least 2 resamples");
  if (confidence <= 0.0 || confidence >= 1.0)
    throw std::invalid_argument("bootstrap: confidence must be in (0, 1)");
  std::vector<double> vals(n_resamples);
  kernels::parallel_for(n_resamples, [&](std::size_t b) {
    Rng r = rng.fork(b);
    RunMatrix res = m;
    for (std::size_t t = 0; t < m.n_tasks; ++t)
      for (std::size_t s = 0; s < m.n_seeds; ++s)
        res.score(t, s) = m.score(t, r.uniform_int(m.n_seeds));
    vals[b] = stat(res);
  });
  std::sort(vals.begin(), vals.end());
  const double alpha = 1.0 - confidence;
  return {sorted_quantile(vals, alpha / 2.0),
          sorted_quantile(vals, 1.0 - alpha / 2.0)};
}

}  // namespace cfpi
