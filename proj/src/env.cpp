#include "cfpi/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfpi/jsonio.hpp"
#include "cfpi/kernels.hpp"

namespace cfpi {

namespace {

double clip(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Standard normal CDF.
double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

constexpr std::uint64_t kRefSeed = 90210;  // reference-score rollouts

}  // namespace

std::vector<double> UniformRandomPolicy::act(std::span<const double>,
                                             Rng& rng) const {
  std::vector<double> a(dim_);
  for (double& x : a) x = rng.uniform(low_, high_);
  return a;
}

std::vector<double> PdControllerPolicy::act(std::span<const double> state,
                                            Rng& rng) const {
  // State layout (p..., v...) with len(p) == len(v) == len(target).
  const std::size_t d = target_.size();
  std::vector<double> a(d);
  for (std::size_t k = 0; k < d; ++k) {
    double u = kp_ * (target_[k] - state[k]) - kd_ * state[d + k];
    if (noise_sd_ > 0.0) u += noise_sd_ * rng.normal();
    a[k] = clip(u, low_, high_);
  }
  return a;
}

// --- QuadraticBandit -------------------------------------------------------

QuadraticBandit::QuadraticBandit()
    : a_star_{0.6, -0.4}, h_{1.0, 0.7} {
  spec_.name = "quad-bandit-v0";
  spec_.state_dim = 1;
  spec_.action_dim = a_star_.size();
  spec_.action_low = -1.0;
  spec_.action_high = 1.0;
  spec_.horizon = 1;
  spec_.gamma = 1.0;
  // Uniform-random reference in closed form: E[(a-a*)^2] = 1/3 + a*^2 per
  // axis for a ~ U[-1, 1]; expert plays a* exactly.
  double r = 0.0;
  for (std::size_t k = 0; k < h_.size(); ++k)
    r -= h_[k] * (1.0 / 3.0 + a_star_[k] * a_star_[k]);
  spec_.random_ref = r;
  spec_.expert_ref = 0.0;
}

std::vector<double> QuadraticBandit::reset(Rng&) const { return {0.0}; }

Env::Step QuadraticBandit::step(std::span<const double>,
                                std::span<const double> action, Rng&) const {
  return {{0.0}, analytic_action_value(action), true};
}

double QuadraticBandit::analytic_action_value(std::span<const double> a) const {
  if (a.size() != a_star_.size())
    throw std::invalid_argument("QuadraticBandit: action dim");
  double q = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - a_star_[k];
    q -= h_[k] * d * d;
  }
  return q;
}

double QuadraticBandit::analytic_policy_value(const GaussianMixture& m) const {
  double v = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double comp = analytic_action_value(m.components[i].mean);
    for (std::size_t k = 0; k < h_.size(); ++k)
      comp -= h_[k] * m.components[i].var[k];
    v += m.weights[i] * comp;
  }
  return v;
}

namespace {
class BanditCritic : public QueryableCritic {
public:
  BanditCritic(std::vector<double> a_star, std::vector<double> h)
      : a_star_(std::move(a_star)), h_(std::move(h)) {}
  CriticQuery query(std::span<const double>,
                    std::span<const double> a) const override {
    CriticQuery out;
    out.action_gradient.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - a_star_[k];
      out.value -= h_[k] * d * d;
      out.action_gradient[k] = -2.0 * h_[k] * d;
    }
    return out;
  }

private:
  std::vector<double> a_star_, h_;
};
}  // namespace

std::unique_ptr<QueryableCritic> QuadraticBandit::analytic_critic() const {
  return std::make_unique<BanditCritic>(a_star_, h_);
}

GaussianMixture QuadraticBandit::behavior_model() const {
  // Equal variances keep the merged-mean value above the mixture value for
  // the concave reward, so every operator starts from a provably safe spot.
  return GaussianMixture({0.5, 0.5}, {DiagGaussian({0.1, 0.1}, {0.04, 0.04}),
                                      DiagGaussian({-0.3, 0.4}, {0.04, 0.04})});
}

DiagGaussian QuadraticBandit::behavior_model_single() const {
  return DiagGaussian({0.1, 0.1}, {0.04, 0.04});
}

// --- ChainMdp ---------------------------------------------------------------

ChainMdp::ChainMdp(std::size_t num_states, double gamma, std::size_t horizon)
    : k_(num_states) {
  if (k_ < 2 || k_ > 5)
    throw std::invalid_argument("ChainMdp: 2..5 states supported");
  spec_.name = "chain-v0";
  spec_.state_dim = 1;
  spec_.action_dim = 1;
  spec_.action_low = -1.0;
  spec_.action_high = 1.0;
  spec_.horizon = horizon;
  spec_.gamma = gamma;
  // References come from fixed-seed rollouts of the uniform-random policy
  // and the tabular-greedy expert.
  UniformRandomPolicy rnd(1, -1.0, 1.0);
  spec_.random_ref = rollout(*this, rnd, 500, Rng(kRefSeed)).mean_return;
  std::unique_ptr<Policy> exp = make_expert_policy(*this);
  spec_.expert_ref = rollout(*this, *exp, 500, Rng(kRefSeed + 1)).mean_return;
}

double ChainMdp::embed(std::size_t state_index) const {
  return -1.0 + 2.0 * static_cast<double>(state_index) /
                    static_cast<double>(k_ - 1);
}

std::size_t ChainMdp::state_index(double embedded) const {
  const double t = (embedded + 1.0) * static_cast<double>(k_ - 1) / 2.0;
  const long long i = std::llround(t);
  return static_cast<std::size_t>(
      std::clamp<long long>(i, 0, static_cast<long long>(k_) - 1));
}

std::size_t ChainMdp::transition(std::size_t s, std::size_t bin) const {
  if (bin == 0) return s == 0 ? 0 : s - 1;
  return s + 1 >= k_ ? k_ - 1 : s + 1;
}

double ChainMdp::reward(std::size_t s, std::size_t bin) const {
  // Small immediate payoff for drifting left vs. a larger payoff that only
  // flows once the right end is reached and held: improving on the behavior
  // requires trusting long-horizon values over instant reward.
  if (bin == 0) return 0.01;
  return s == k_ - 1 ? 0.1 : 0.0;
}

std::vector<double> ChainMdp::reset(Rng& rng) const {
  return {embed(rng.uniform_int(k_))};
}

Env::Step ChainMdp::step(std::span<const double> state,
                         std::span<const double> action, Rng&) const {
  const std::size_t s = state_index(state[0]);
  const std::size_t bin = action_bin(action[0]);
  const std::size_t s2 = transition(s, bin);
  return {{embed(s2)}, reward(s, bin), false};
}

GaussianMixture ChainMdp::behavior_model() const {
  // Right-leaning unimodal behavior: the dataset covers both bins (about 2%
  // of actions land left of zero) while keeping every policy-improvement
  // anchor inside the data support.
  return GaussianMixture({1.0}, {DiagGaussian({0.4}, {0.04})});
}

std::vector<double> chain_dp_q(const ChainMdp& env,
                               std::span<const double> p_right, double tol) {
  const std::size_t k = env.num_states();
  if (p_right.size() != k)
    throw std::invalid_argument("chain_dp_q: need one p_right per state");
  const double gamma = env.spec().gamma;
  std::vector<double> q(2 * k, 0.0), next(2 * k, 0.0);
  for (int it = 0; it < 100000; ++it) {
    double resid = 0.0;
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t b = 0; b < 2; ++b) {
        const std::size_t s2 = env.transition(s, b);
        const double cont =
            (1.0 - p_right[s2]) * q[s2 * 2] + p_right[s2] * q[s2 * 2 + 1];
        next[s * 2 + b] = env.reward(s, b) + gamma * cont;
        resid = std::max(resid, std::abs(next[s * 2 + b] - q[s * 2 + b]));
      }
    q.swap(next);
    if (resid < tol) break;
  }
  return q;
}

std::vector<double> chain_optimal_q(const ChainMdp& env, double tol) {
  const std::size_t k = env.num_states();
  const double gamma = env.spec().gamma;
  std::vector<double> q(2 * k, 0.0), next(2 * k, 0.0);
  for (int it = 0; it < 100000; ++it) {
    double resid = 0.0;
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t b = 0; b < 2; ++b) {
        const std::size_t s2 = env.transition(s, b);
        next[s * 2 + b] = env.reward(s, b) +
                          gamma * std::max(q[s2 * 2], q[s2 * 2 + 1]);
        resid = std::max(resid, std::abs(next[s * 2 + b] - q[s * 2 + b]));
      }
    q.swap(next);
    if (resid < tol) break;
  }
  return q;
}

double prob_nonnegative_1d(const GaussianMixture& m) {
  if (m.dim() != 1)
    throw std::invalid_argument("prob_nonnegative_1d: 1-D only");
  double p = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    p += m.weights[i] *
         phi(m.components[i].mean[0] / std::sqrt(m.components[i].var[0]));
  return p;
}

namespace {
// Plays the tabular-optimal bin as a mid-magnitude action.
class GreedyChainPolicy : public Policy {
public:
  explicit GreedyChainPolicy(const ChainMdp& env) : env_(env) {
    std::vector<double> q = chain_optimal_q(env);
    best_bin_.resize(env.num_states());
    for (std::size_t s = 0; s < best_bin_.size(); ++s)
      best_bin_[s] = q[s * 2 + 1] >= q[s * 2] ? 1 : 0;
  }
  std::vector<double> act(std::span<const double> state, Rng&) const override {
    const std::size_t s = env_.state_index(state[0]);
    return {best_bin_[s] == 1 ? 0.5 : -0.5};
  }

private:
  const ChainMdp& env_;
  std::vector<std::size_t> best_bin_;
};
}  // namespace

// --- PointMass2D ------------------------------------------------------------

PointMass2D::PointMass2D() : goal_{0.9, 0.0}, offset_point_{1.9, -0.9} {
  spec_.name = "pointmass-bimodal-v0";
  spec_.state_dim = 4;
  spec_.action_dim = 2;
  spec_.action_low = -1.0;
  spec_.action_high = 1.0;
  spec_.horizon = 120;
  spec_.gamma = 0.99;
  UniformRandomPolicy rnd(2, -1.0, 1.0);
  spec_.random_ref = rollout(*this, rnd, 200, Rng(kRefSeed)).mean_return;
  spec_.expert_ref =
      rollout(*this, *expert_policy(), 200, Rng(kRefSeed + 1)).mean_return;
}

std::vector<double> PointMass2D::reset(Rng& rng) const {
  return {rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), 0.05 * rng.normal(),
          0.05 * rng.normal()};
}

Env::Step PointMass2D::step(std::span<const double> state,
                            std::span<const double> action, Rng&) const {
  Step out;
  out.state.resize(4);
  for (std::size_t k = 0; k < 2; ++k) {
    const double a = clip(action[k], spec_.action_low, spec_.action_high);
    out.state[2 + k] = damping_ * state[2 + k] + dt_ * a;
    out.state[k] = state[k] + dt_ * out.state[2 + k];
  }
  const double dx = out.state[0] - goal_[0];
  const double dy = out.state[1] - goal_[1];
  out.reward = -0.1 * std::sqrt(dx * dx + dy * dy);
  out.done = false;
  return out;
}

std::unique_ptr<Policy> PointMass2D::expert_policy(double noise_sd) const {
  return std::make_unique<PdControllerPolicy>(goal_, 0.55, 0.6, noise_sd,
                                              spec_.action_low,
                                              spec_.action_high);
}

std::unique_ptr<Policy> PointMass2D::mediocre_policy(double noise_sd) const {
  return std::make_unique<PdControllerPolicy>(offset_point_, 0.35, 0.25,
                                              noise_sd, spec_.action_low,
                                              spec_.action_high);
}

// --- Rollouts, scores, generation -------------------------------------------

RolloutStats rollout(const Env& env, const Policy& policy,
                     std::size_t episodes, const Rng& rng) {
  RolloutStats stats;
  stats.episode_returns.assign(episodes, 0.0);
  kernels::parallel_for(episodes, [&](std::size_t e) {
    Rng er = rng.fork(e);
    std::vector<double> s = env.reset(er);
    double ret = 0.0;
    for (std::size_t t = 0; t < env.spec().horizon; ++t) {
      std::vector<double> a = policy.act(s, er);
      Env::Step st = env.step(s, a, er);
      ret += st.reward;
      if (st.done) break;
      s = std::move(st.state);
    }
    stats.episode_returns[e] = ret;
  });
  double acc = 0.0;
  for (double r : stats.episode_returns) acc += r;
  stats.mean_return = episodes ? acc / static_cast<double>(episodes) : 0.0;
  return stats;
}

double normalized_score(double raw_return, const EnvSpec& spec) {
  const double span = spec.expert_ref - spec.random_ref;
  if (std::abs(span) < 1e-12)
    throw std::runtime_error("normalized_score: degenerate references");
  return 100.0 * (raw_return - spec.random_ref) / span;
}

Dataset generate_heterogeneous(const Env& env,
                               const std::vector<const Policy*>& policies,
                               std::span<const double> fractions,
                               std::span<const std::string> labels,
                               std::size_t episodes, const Rng& rng) {
  if (policies.empty() || policies.size() != fractions.size() ||
      policies.size() != labels.size())
    throw std::invalid_argument("generate_heterogeneous: mix size mismatch");
  double total = 0.0;
  for (double f : fractions) total += f;
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("generate_heterogeneous: fractions must sum to 1");

  // Episode e belongs to the policy whose cumulative-fraction block holds e.
  std::vector<std::size_t> boundary(policies.size());
  double cum = 0.0;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    cum += fractions[i];
    boundary[i] = static_cast<std::size_t>(
        std::llround(cum * static_cast<double>(episodes)));
  }
  boundary.back() = episodes;

  const EnvSpec& spec = env.spec();
  Dataset d;
  d.state_dim = spec.state_dim;
  d.action_dim = spec.action_dim;
  const std::vector<double> zero_action(spec.action_dim, 0.0);

  auto push = [&d](std::span<const double> s, std::span<const double> a,
                   double r, std::span<const double> s2,
                   std::span<const double> a2, double done) {
    d.states.insert(d.states.end(), s.begin(), s.end());
    d.actions.insert(d.actions.end(), a.begin(), a.end());
    d.rewards.push_back(r);
    d.next_states.insert(d.next_states.end(), s2.begin(), s2.end());
    d.next_actions.insert(d.next_actions.end(), a2.begin(), a2.end());
    d.dones.push_back(done);
  };

  std::size_t pol = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    while (e >= boundary[pol]) ++pol;
    const Policy& policy = *policies[pol];
    Rng er = rng.fork(e);
    std::vector<double> s = env.reset(er);
    std::vector<double> a = policy.act(s, er);
    for (std::size_t t = 0; t < spec.horizon; ++t) {
      Env::Step st = env.step(s, a, er);
      if (st.done) {
        push(s, a, st.reward, st.state, zero_action, 1.0);
        break;
      }
      // Executed next action; at truncation it is sampled for bootstrap
      // only and never executed.
      std::vector<double> a2 = policy.act(st.state, er);
      push(s, a, st.reward, st.state, a2, 0.0);
      s = std::move(st.state);
      a = std::move(a2);
    }
  }

  jsonio::Writer w;
  w.begin_obj();
  w.key("env").str(spec.name);
  w.key("episodes").num_uint(episodes);
  w.key("seed").num_uint(rng.root());
  w.key("mix").begin_arr();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    w.begin_obj();
    w.key("label").str(labels[i]);
    w.key("fraction").num(fractions[i]);
    w.end_obj();
  }
  w.end_arr();
  w.end_obj();
  d.metadata_json = w.out();
  d.validate();
  return d;
}

// --- Registry ----------------------------------------------------------------

const Env& get_env(std::string_view name) {
  static const QuadraticBandit bandit;
  static const ChainMdp chain;
  static const PointMass2D pointmass;
  if (name == "quad-bandit-v0") return bandit;
  if (name == "chain-v0") return chain;
  if (name == "pointmass-bimodal-v0") return pointmass;
  throw std::invalid_argument("unknown env: " + std::string(name));
}

std::vector<std::string> env_names() {
  return {"quad-bandit-v0", "chain-v0", "pointmass-bimodal-v0"};
}

std::unique_ptr<Policy> make_random_policy(const Env& env) {
  const EnvSpec& s = env.spec();
  return std::make_unique<UniformRandomPolicy>(s.action_dim, s.action_low,
                                               s.action_high);
}

std::unique_ptr<Policy> make_expert_policy(const Env& env) {
  if (const auto* bandit = dynamic_cast<const QuadraticBandit*>(&env))
    return std::make_unique<ConstantPolicy>(bandit->optimum());
  if (const auto* chain = dynamic_cast<const ChainMdp*>(&env))
    return std::make_unique<GreedyChainPolicy>(*chain);
  if (const auto* pm = dynamic_cast<const PointMass2D*>(&env))
    return pm->expert_policy();
  throw std::invalid_argument("make_expert_policy: unknown env type");
}

BehaviorMix make_behavior_mix(const Env& env) {
  BehaviorMix mix;
  if (const auto* bandit = dynamic_cast<const QuadraticBandit*>(&env)) {
    mix.policies.push_back(
        std::make_unique<FixedMixturePolicy>(bandit->behavior_model()));
    mix.fractions = {1.0};
    mix.labels = {"bimodal-gaussian"};
    return mix;
  }
  if (const auto* chain = dynamic_cast<const ChainMdp*>(&env)) {
    mix.policies.push_back(
        std::make_unique<FixedMixturePolicy>(chain->behavior_model()));
    mix.fractions = {1.0};
    mix.labels = {"right-leaning-gaussian"};
    return mix;
  }
  if (const auto* pm = dynamic_cast<const PointMass2D*>(&env)) {
    mix.policies.push_back(pm->expert_policy());
    mix.policies.push_back(pm->mediocre_policy());
    mix.fractions = {0.5, 0.5};
    mix.labels = {"expert", "mediocre"};
    return mix;
  }
  throw std::invalid_argument("make_behavior_mix: unknown env type");
}

}  // namespace cfpi
