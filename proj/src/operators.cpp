#include "cfpi/operators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cfpi/constants.hpp"

namespace cfpi {

namespace {

void require_log_tau(double log_tau) {
  if (!(log_tau >= 0.0))
    throw std::invalid_argument("operators: log_tau must be >= 0");
}

void require_dim(std::size_t expect, std::size_t got, const char* what) {
  if (expect != got) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// anchor + radius * Sigma g / ||g||_Sigma, or the anchor when the gradient
// is degenerate.
std::vector<double> sigma_step(std::span<const double> anchor,
                               std::span<const double> var,
                               std::span<const double> g, double radius) {
  std::vector<double> out(anchor.begin(), anchor.end());
  const double norm = sigma_norm(var, g);
  if (norm < kGradEps) return out;
  const double scale = radius / norm;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += scale * var[k] * g[k];
  return out;
}

}  // namespace

TrustRegion sg_trust_region(const DiagGaussian& beta, double log_tau) {
  require_log_tau(log_tau);
  return {log_tau, log_tau + 0.5 * log_det_2pi(beta.var)};
}

TrustRegion lse_trust_region(const GaussianMixture& beta, double log_tau) {
  require_log_tau(log_tau);
  // delta = log tau + min_i { 0.5 log det(2 pi Sigma_i) - log w_i }; the
  // minimizing component always keeps a feasible (radius 2 log tau)
  // subproblem. Zero-weight components never attain the min.
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta.weights[i] <= 0.0) continue;
    lo = std::min(lo, 0.5 * log_det_2pi(beta.components[i].var) -
                          std::log(beta.weights[i]));
  }
  return {log_tau, log_tau + lo};
}

TrustRegion jensen_trust_region(const GaussianMixture& beta, double log_tau) {
  require_log_tau(log_tau);
  double acc = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i)
    acc += beta.weights[i] * log_det_2pi(beta.components[i].var);
  return {log_tau, log_tau + 0.5 * acc};
}

std::vector<double> improve_sg(const DiagGaussian& beta,
                               const ActionGradient& grad, double log_tau) {
  require_log_tau(log_tau);
  require_dim(beta.dim(), grad.grad.size(), "improve_sg");
  return sigma_step(beta.mean, beta.var, grad.grad,
                    std::sqrt(2.0 * log_tau));
}

CandidateAction improve_lse(const GaussianMixture& beta,
                            std::span<const ActionGradient> grads,
                            double log_tau, const ActionValueFn& q_eval) {
  const TrustRegion tr = lse_trust_region(beta, log_tau);
  if (grads.size() != beta.size())
    throw std::invalid_argument("improve_lse: one gradient per component required");

  CandidateAction best;
  bool have = false;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta.weights[i] <= 0.0) continue;
    const DiagGaussian& c = beta.components[i];
    require_dim(c.dim(), grads[i].grad.size(), "improve_lse");
    // Per-component radius; negative means this component's density can
    // never reach the required level and it is skipped.
    const double kappa_sq = 2.0 * (tr.delta + std::log(beta.weights[i])) -
                            log_det_2pi(c.var);
    if (kappa_sq < 0.0) continue;
    std::vector<double> a =
        sigma_step(c.mean, c.var, grads[i].grad, std::sqrt(kappa_sq));
    const double q = q_eval(a);
    if (!have || q > best.q_value) {
      best = {std::move(a), CandidateSource::kLse, q};
      have = true;
    }
  }
  if (!have)
    throw std::runtime_error("improve_lse: no feasible component");
  return best;
}

std::vector<double> improve_jensen(const GaussianMixture& beta,
                                   const ActionGradient& grad_at_pseudo_mean,
                                   double log_tau) {
  require_log_tau(log_tau);
  const PseudoGaussian pg = pseudo_gaussian(beta);
  require_dim(pg.dim(), grad_at_pseudo_mean.grad.size(), "improve_jensen");

  // Weighted dispersion of component means around the merged mean eats into
  // the radius; once it exceeds 2 log tau the merged mean itself is the
  // best feasible point.
  double spread = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const DiagGaussian& c = beta.components[i];
    double quad = 0.0;
    for (std::size_t k = 0; k < pg.dim(); ++k) {
      const double d = c.mean[k] - pg.mean[k];
      quad += d * d / c.var[k];
    }
    spread += beta.weights[i] * quad;
  }
  const double kappa_sq = 2.0 * log_tau - spread;
  if (kappa_sq <= 0.0) return pg.mean;
  return sigma_step(pg.mean, pg.var, grad_at_pseudo_mean.grad,
                    std::sqrt(kappa_sq));
}

CandidateAction improve_mg(const GaussianMixture& beta,
                           const QueryableCritic& critic,
                           std::span<const double> state, double log_tau) {
  std::vector<ActionGradient> grads(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta.weights[i] <= 0.0) continue;
    CriticQuery q = critic.query(state, beta.components[i].mean);
    grads[i] = {std::move(q.action_gradient), beta.components[i].mean};
  }
  CandidateAction lse = improve_lse(
      beta, grads, log_tau,
      [&](std::span<const double> a) { return critic.value(state, a); });

  const PseudoGaussian pg = pseudo_gaussian(beta);
  CriticQuery at_pg = critic.query(state, pg.mean);
  std::vector<double> aj = improve_jensen(
      beta, {std::move(at_pg.action_gradient), pg.mean}, log_tau);
  const double qj = critic.value(state, aj);

  if (qj > lse.q_value)
    return {std::move(aj), CandidateSource::kJensen, qj};
  return lse;
}

CandidateAction mode_select(const GaussianMixture& beta,
                            const QueryableCritic& critic,
                            std::span<const double> state,
                            double weight_threshold) {
  std::vector<std::size_t> idx = nontrivial_components(beta, weight_threshold);
  if (idx.empty()) {
    // Degenerate threshold; fall back to every component rather than fail.
    idx.resize(beta.size());
    for (std::size_t i = 0; i < beta.size(); ++i) idx[i] = i;
  }
  CandidateAction best;
  bool have = false;
  for (std::size_t i : idx) {
    const double q = critic.value(state, beta.components[i].mean);
    if (!have || q > best.q_value) {
      best = {beta.components[i].mean, CandidateSource::kComponentMean, q};
      have = true;
    }
  }
  return best;
}

CandidateAction easy_bcq(const GaussianMixture& beta,
                         const QueryableCritic& critic,
                         std::span<const double> state, std::size_t m_samples,
                         Rng& rng) {
  if (m_samples == 0)
    throw std::invalid_argument("easy_bcq: need at least one sample");
  CandidateAction best;
  bool have = false;
  for (std::size_t s = 0; s < m_samples; ++s) {
    std::vector<double> a = sample(beta, rng);
    const double q = critic.value(state, a);
    if (!have || q > best.q_value) {
      best = {std::move(a), CandidateSource::kBehaviorSample, q};
      have = true;
    }
  }
  return best;
}

std::vector<double> improve_det(std::span<const double> anchor,
                                std::span<const double> grad, double delta) {
  if (!(delta >= 0.0))
    throw std::invalid_argument("improve_det: delta must be >= 0");
  require_dim(anchor.size(), grad.size(), "improve_det");
  std::vector<double> out(anchor.begin(), anchor.end());
  double norm = 0.0;
  for (double g : grad) norm += g * g;
  norm = std::sqrt(norm);
  if (norm < kGradEps) return out;
  const double scale = std::sqrt(2.0 * delta) / norm;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += scale * grad[k];
  return out;
}

CandidateAction improve_det_stochastic(const GaussianMixture& beta,
                                       const QueryableCritic& critic,
                                       std::span<const double> state,
                                       double delta, std::size_t m_samples,
                                       Rng& rng) {
  CandidateAction anchor = easy_bcq(beta, critic, state, m_samples, rng);
  CriticQuery q = critic.query(state, anchor.action);
  std::vector<double> a = improve_det(anchor.action, q.action_gradient, delta);
  const double qv = critic.value(state, a);
  return {std::move(a), CandidateSource::kDeterministic, qv};
}

}  // namespace cfpi
