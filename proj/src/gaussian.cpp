#include "cfpi/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "cfpi/constants.hpp"
#include "cfpi/jsonio.hpp"

namespace cfpi {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
}

DiagGaussian::DiagGaussian(std::vector<double> mean_in,
                           std::vector<double> var_in)
    : mean(std::move(mean_in)), var(std::move(var_in)) {
  if (mean.size() != var.size())
    throw std::invalid_argument("DiagGaussian: mean/var size mismatch");
  if (mean.empty()) throw std::invalid_argument("DiagGaussian: empty");
  for (double& v : var) {
    if (!std::isfinite(v)) throw std::invalid_argument("DiagGaussian: non-finite variance");
    v = std::max(v, kVarFloor);
  }
}

GaussianMixture::GaussianMixture(std::vector<double> weights_in,
                                 std::vector<DiagGaussian> components_in)
    : weights(std::move(weights_in)), components(std::move(components_in)) {
  if (weights.size() != components.size() || weights.empty())
    throw std::invalid_argument("GaussianMixture: weights/components mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0))
      throw std::invalid_argument("GaussianMixture: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > kWeightTol)
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
  const std::size_t d = components.front().dim();
  for (const DiagGaussian& c : components)
    if (c.dim() != d)
      throw std::invalid_argument("GaussianMixture: component dim mismatch");
}

GaussianMixture as_mixture(const DiagGaussian& g) {
  return GaussianMixture({1.0}, {g});
}

double log_prob(const DiagGaussian& g, std::span<const double> x) {
  if (x.size() != g.dim())
    throw std::invalid_argument("log_prob: dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - g.mean[k];
    acc += kLog2Pi + std::log(g.var[k]) + d * d / g.var[k];
  }
  return -0.5 * acc;
}

double log_prob(const GaussianMixture& m, std::span<const double> x) {
  // Max-shifted LSE over per-component joint terms log w_i + log N_i(x).
  double hi = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    terms[i] = m.weights[i] > 0.0
                   ? std::log(m.weights[i]) + log_prob(m.components[i], x)
                   : -std::numeric_limits<double>::infinity();
    hi = std::max(hi, terms[i]);
  }
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - hi);
  return hi + std::log(sum);
}

double lse_lower_bound(const GaussianMixture& m, std::span<const double> x) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.weights[i] <= 0.0) continue;
    best = std::max(best,
                    std::log(m.weights[i]) + log_prob(m.components[i], x));
  }
  return best;
}

double jensen_lower_bound(const GaussianMixture& m, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.weights[i] > 0.0) acc += m.weights[i] * log_prob(m.components[i], x);
  return acc;
}

PseudoGaussian pseudo_gaussian(const GaussianMixture& m) {
  const std::size_t d = m.dim();
  PseudoGaussian out;
  out.var.assign(d, 0.0);
  out.mean.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double prec = 0.0;
    double wmean = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      prec += m.weights[i] / m.components[i].var[k];
      wmean += m.weights[i] * m.components[i].mean[k] / m.components[i].var[k];
    }
    out.var[k] = 1.0 / prec;
    out.mean[k] = wmean / prec;
  }
  return out;
}

std::vector<double> sample(const DiagGaussian& g, Rng& rng) {
  std::vector<double> x(g.dim());
  for (std::size_t k = 0; k < x.size(); ++k)
    x[k] = g.mean[k] + std::sqrt(g.var[k]) * rng.normal();
  return x;
}

std::vector<double> sample(const GaussianMixture& m, Rng& rng) {
  // Inverse-CDF draw over weights, then one component draw.
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t pick = m.size() - 1;
  for (std::size_t i = 0; i < m.size(); ++i) {
    cum += m.weights[i];
    if (u < cum) {
      pick = i;
      break;
    }
  }
  return sample(m.components[pick], rng);
}

std::vector<std::size_t> nontrivial_components(const GaussianMixture& m,
                                               double weight_threshold) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.weights[i] > weight_threshold) idx.push_back(i);
  return idx;
}

double log_det_2pi(std::span<const double> var) {
  double acc = 0.0;
  for (double v : var) acc += kLog2Pi + std::log(v);
  return acc;
}

double sigma_norm(std::span<const double> var, std::span<const double> g) {
  if (var.size() != g.size())
    throw std::invalid_argument("sigma_norm: dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * g[k] * var[k];
  return std::sqrt(acc);
}

std::string to_json_string(const GaussianMixture& m) {
  jsonio::Writer w;
  w.begin_obj();
  w.key("d").num_uint(m.dim());
  w.key("N").num_uint(m.size());
  w.key("weights").num_array(m.weights);
  w.key("means").begin_arr();
  for (const DiagGaussian& c : m.components) w.num_array(c.mean);
  w.end_arr();
  w.key("vars").begin_arr();
  for (const DiagGaussian& c : m.components) w.num_array(c.var);
  w.end_arr();
  w.end_obj();
  return w.out();
}

GaussianMixture mixture_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const std::size_t d = j.at("d").get<std::size_t>();
  const std::size_t n = j.at("N").get<std::size_t>();
  auto weights = j.at("weights").get<std::vector<double>>();
  auto means = j.at("means").get<std::vector<std::vector<double>>>();
  auto vars = j.at("vars").get<std::vector<std::vector<double>>>();
  if (weights.size() != n || means.size() != n || vars.size() != n)
    throw std::invalid_argument("mixture_from_json: N mismatch");
  std::vector<DiagGaussian> comps;
  comps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (means[i].size() != d || vars[i].size() != d)
      throw std::invalid_argument("mixture_from_json: d mismatch");
    comps.emplace_back(std::move(means[i]), std::move(vars[i]));
  }
  return GaussianMixture(std::move(weights), std::move(comps));
}

}  // namespace cfpi
