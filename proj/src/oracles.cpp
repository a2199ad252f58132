#include "cfpi/oracles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cfpi/constants.hpp"

namespace cfpi::oracle {

namespace {

// Walk the dual path a(eta); the constraint value is strictly decreasing in
// eta, so bisect (in log space) until it meets the target level. step() must
// return the KKT-stationary action for multiplier eta.
template <typename StepFn, typename ConstraintFn>
std::vector<double> bisect_path(const StepFn& step,
                                const ConstraintFn& constraint,
                                double target) {
  double lo = std::log(1e-18), hi = std::log(1e18);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (constraint(step(std::exp(mid))) > target)
      lo = mid;
    else
      hi = mid;
  }
  return step(std::exp(0.5 * (lo + hi)));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

void require_log_tau(double log_tau) {
  if (!(log_tau >= 0.0))
    throw std::invalid_argument("oracle: log_tau must be >= 0");
}

// max g.a over 0.5 (a - mu)' diag(var)^-1 (a - mu) <= target.
std::vector<double> ellipsoid_max(std::span<const double> mu,
                                  std::span<const double> var,
                                  std::span<const double> g, double target) {
  std::vector<double> anchor(mu.begin(), mu.end());
  if (target <= 0.0 || sigma_norm(var, g) < kGradEps) return anchor;
  auto step = [&](double eta) {
    std::vector<double> a(mu.size());
    for (std::size_t k = 0; k < a.size(); ++k)
      a[k] = mu[k] + var[k] * g[k] / eta;
    return a;
  };
  auto constraint = [&](const std::vector<double>& a) {
    double q = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - mu[k];
      q += d * d / var[k];
    }
    return 0.5 * q;
  };
  return bisect_path(step, constraint, target);
}

}  // namespace

std::vector<double> qclp_sg_bisect(const DiagGaussian& beta,
                                   std::span<const double> g, double log_tau) {
  require_log_tau(log_tau);
  if (g.size() != beta.dim())
    throw std::invalid_argument("qclp_sg_bisect: dimension mismatch");
  return ellipsoid_max(beta.mean, beta.var, g, log_tau);
}

LseOracleResult qclp_lse_bisect(const GaussianMixture& beta,
                                std::span<const double> g, double log_tau) {
  require_log_tau(log_tau);
  if (g.size() != beta.dim())
    throw std::invalid_argument("qclp_lse_bisect: dimension mismatch");

  // Density level the bound must clear; the minimizing component always
  // retains a nonempty feasible ellipsoid.
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta.weights[i] <= 0.0) continue;
    lo = std::min(lo, 0.5 * log_det_2pi(beta.components[i].var) -
                          std::log(beta.weights[i]));
  }
  const double delta = log_tau + lo;

  LseOracleResult best;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta.weights[i] <= 0.0) continue;
    const DiagGaussian& c = beta.components[i];
    const double target = delta + std::log(beta.weights[i]) -
                          0.5 * log_det_2pi(c.var);
    if (target < 0.0) continue;
    std::vector<double> a = ellipsoid_max(c.mean, c.var, g, target);
    const double obj = dot(g, a);
    if (!best.feasible || obj > best.objective) {
      best = {std::move(a), obj, i, true};
    }
  }
  return best;
}

std::vector<double> qclp_jensen_bisect(const GaussianMixture& beta,
                                       std::span<const double> g,
                                       double log_tau) {
  require_log_tau(log_tau);
  if (g.size() != beta.dim())
    throw std::invalid_argument("qclp_jensen_bisect: dimension mismatch");
  const std::size_t d = beta.dim();

  // Unconstrained minimizer of the quadratic constraint: the precision
  // weighted merge of the component means.
  std::vector<double> prec(d, 0.0), b(d, 0.0);
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const DiagGaussian& c = beta.components[i];
    for (std::size_t k = 0; k < d; ++k) {
      prec[k] += beta.weights[i] / c.var[k];
      b[k] += beta.weights[i] * c.mean[k] / c.var[k];
    }
  }
  std::vector<double> center(d);
  for (std::size_t k = 0; k < d; ++k) center[k] = b[k] / prec[k];

  auto constraint = [&](const std::vector<double>& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
      const DiagGaussian& c = beta.components[i];
      double quad = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[k] - c.mean[k];
        quad += diff * diff / c.var[k];
      }
      acc += beta.weights[i] * quad;
    }
    return 0.5 * acc;
  };

  if (constraint(center) >= log_tau) return center;

  std::vector<double> merged_var(d);
  for (std::size_t k = 0; k < d; ++k) merged_var[k] = 1.0 / prec[k];
  if (sigma_norm(merged_var, g) < kGradEps) return center;

  auto step = [&](double eta) {
    std::vector<double> a(d);
    for (std::size_t k = 0; k < d; ++k) a[k] = (b[k] + g[k] / eta) / prec[k];
    return a;
  };
  return bisect_path(step, constraint, log_tau);
}

}  // namespace cfpi::oracle
