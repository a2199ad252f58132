#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cfpi/gaussian.hpp"
#include "cfpi/rng.hpp"

namespace cfpi {

// Critic gradient w.r.t. the action, together with the action it was taken
// at. Operators consume gradients as plain values so they stay decoupled
// from any particular critic implementation.
struct ActionGradient {
  std::vector<double> grad;
  std::vector<double> anchor;
};

// One critic read-out: value and action gradient at a state-action pair.
struct CriticQuery {
  double value = 0.0;
  std::vector<double> action_gradient;
};

// Anything the selection-based operators can query. Implemented by the
// learned critics and by the analytic bandit critic.
class QueryableCritic {
public:
  virtual ~QueryableCritic() = default;
  virtual CriticQuery query(std::span<const double> state,
                            std::span<const double> action) const = 0;
  virtual double value(std::span<const double> state,
                       std::span<const double> action) const {
    return query(state, action).value;
  }
};

enum class CandidateSource {
  kSingleGaussian,
  kLse,
  kJensen,
  kComponentMean,
  kBehaviorSample,
  kDeterministic,
};

struct CandidateAction {
  std::vector<double> action;
  CandidateSource source = CandidateSource::kSingleGaussian;
  double q_value = 0.0;
};

// Behavior-density trust region: actions a with -log pi_beta(a|s) <= delta.
// log_tau >= 0 is required throughout; delta is the operator-specific radius
// derived from it.
struct TrustRegion {
  double log_tau = 0.0;
  double delta = 0.0;
};

TrustRegion sg_trust_region(const DiagGaussian& beta, double log_tau);
TrustRegion lse_trust_region(const GaussianMixture& beta, double log_tau);
TrustRegion jensen_trust_region(const GaussianMixture& beta, double log_tau);

// Single-Gaussian update: one Sigma-metric step of length sqrt(2 log tau)
// along the preconditioned gradient,
//   mu + sqrt(2 log tau) * Sigma g / sqrt(g^T Sigma g).
// Gradients with Sigma-norm below kGradEps return the mean unchanged.
std::vector<double> improve_sg(const DiagGaussian& beta,
                               const ActionGradient& grad, double log_tau);

using ActionValueFn = std::function<double(std::span<const double>)>;

// Mixture update through the max-term lower bound: solves one trust-region
// subproblem per mixture component (gradient anchored at that component's
// mean), drops components whose radius is negative, and returns the
// candidate the supplied evaluator scores highest (ties: lowest component
// index).
CandidateAction improve_lse(const GaussianMixture& beta,
                            std::span<const ActionGradient> grads,
                            double log_tau, const ActionValueFn& q_eval);

// Mixture update through the expectation lower bound: merges the mixture
// into its pseudo-Gaussian and takes one step from the merged mean with
// radius kappa = sqrt(max(0, 2 log tau - sum_i w_i (mu_i - mu)^T
// Sigma_i^{-1} (mu_i - mu))). Non-positive radius returns the merged mean.
std::vector<double> improve_jensen(const GaussianMixture& beta,
                                   const ActionGradient& grad_at_pseudo_mean,
                                   double log_tau);

// Runs both mixture updates and keeps whichever the critic scores higher
// (ties go to the max-term candidate).
CandidateAction improve_mg(const GaussianMixture& beta,
                           const QueryableCritic& critic,
                           std::span<const double> state, double log_tau);

// Picks the best-scoring component mean among components with weight above
// the threshold (all components if none qualify).
CandidateAction mode_select(const GaussianMixture& beta,
                            const QueryableCritic& critic,
                            std::span<const double> state,
                            double weight_threshold);

// Best of m_samples behavior draws under the critic.
CandidateAction easy_bcq(const GaussianMixture& beta,
                         const QueryableCritic& critic,
                         std::span<const double> state, std::size_t m_samples,
                         Rng& rng);

// Covariance-free update: Euclidean step of length sqrt(2 delta) along the
// raw gradient. delta is the radius itself, not log tau.
std::vector<double> improve_det(std::span<const double> anchor,
                                std::span<const double> grad, double delta);

// Covariance-free update around the best of m_samples behavior draws.
CandidateAction improve_det_stochastic(const GaussianMixture& beta,
                                       const QueryableCritic& critic,
                                       std::span<const double> state,
                                       double delta, std::size_t m_samples,
                                       Rng& rng);

}  // namespace cfpi
