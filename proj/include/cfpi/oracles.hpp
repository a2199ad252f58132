#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfpi/gaussian.hpp"

// Slow reference solvers for the trust-region subproblems. Each maximizes a
// linear objective g . a by bisecting the dual multiplier along the KKT path
// a(eta) and checking primal feasibility directly, so they share no code
// path with the closed-form operators they are used to cross-check.
namespace cfpi::oracle {

// max g.a  s.t.  0.5 (a - mu)' Sigma^-1 (a - mu) <= log_tau.
std::vector<double> qclp_sg_bisect(const DiagGaussian& beta,
                                   std::span<const double> g, double log_tau);

struct LseOracleResult {
  std::vector<double> action;
  double objective = 0.0;  // g . action
  std::size_t component = 0;
  bool feasible = false;
};

// max g.a over the union of per-component ellipsoids induced by thresholding
// the log-sum-exp lower bound of the mixture density.
LseOracleResult qclp_lse_bisect(const GaussianMixture& beta,
                                std::span<const double> g, double log_tau);

// max g.a  s.t.  0.5 sum_i w_i (a - mu_i)' Sigma_i^-1 (a - mu_i) <= log_tau,
// the constraint induced by the Jensen lower bound of the mixture density.
std::vector<double> qclp_jensen_bisect(const GaussianMixture& beta,
                                       std::span<const double> g,
                                       double log_tau);

}  // namespace cfpi::oracle
