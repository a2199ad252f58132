#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cfpi/rng.hpp"

namespace cfpi {

// Diagonal-covariance Gaussian. Variances are floored at kVarFloor on
// construction so log-densities and trust-region radii stay finite.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> var;

  DiagGaussian() = default;
  DiagGaussian(std::vector<double> mean_in, std::vector<double> var_in);

  std::size_t dim() const { return mean.size(); }
};

// Finite mixture of diagonal Gaussians. Weights must be nonnegative and sum
// to one within kWeightTol; all components share one dimension.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<DiagGaussian> components;

  GaussianMixture() = default;
  GaussianMixture(std::vector<double> weights_in,
                  std::vector<DiagGaussian> components_in);

  std::size_t dim() const { return components.front().dim(); }
  std::size_t size() const { return components.size(); }
};

// Precision-weighted merge of a mixture into a single Gaussian: the
// distribution whose log-density matches the mixture's Jensen lower bound up
// to an additive constant.
struct PseudoGaussian {
  std::vector<double> mean;
  std::vector<double> var;

  std::size_t dim() const { return mean.size(); }
};

GaussianMixture as_mixture(const DiagGaussian& g);

// Exact log density.
double log_prob(const DiagGaussian& g, std::span<const double> x);
// Mixture log density via max-shifted log-sum-exp (no underflow for small
// component densities).
double log_prob(const GaussianMixture& m, std::span<const double> x);

// The two analytic lower bounds on the mixture log density:
//   lse:    max_i { log w_i + log N_i(x) }   (keeps the largest LSE term)
//   jensen: sum_i w_i log N_i(x)             (weights as an expectation)
// Both are <= log_prob(m, x) everywhere and equal it when m has one
// component.
double lse_lower_bound(const GaussianMixture& m, std::span<const double> x);
double jensen_lower_bound(const GaussianMixture& m, std::span<const double> x);

PseudoGaussian pseudo_gaussian(const GaussianMixture& m);

std::vector<double> sample(const DiagGaussian& g, Rng& rng);
std::vector<double> sample(const GaussianMixture& m, Rng& rng);

// Indices of components whose weight exceeds the threshold.
std::vector<std::size_t> nontrivial_components(const GaussianMixture& m,
                                               double weight_threshold);

// log det(2*pi*Sigma) = sum_k log(2*pi*var_k); shows up in every
// trust-region radius.
double log_det_2pi(std::span<const double> var);

// Sigma-weighted gradient norm sqrt(g^T Sigma g) for diagonal Sigma.
double sigma_norm(std::span<const double> var, std::span<const double> g);

// Model file round-trip: {"d":..,"N":..,"weights":[..],"means":[[..]],
// "vars":[[..]]}. Doubles are written with 17 significant digits so the trip
// is bit-exact.
std::string to_json_string(const GaussianMixture& m);
GaussianMixture mixture_from_json(const std::string& text);

}  // namespace cfpi
