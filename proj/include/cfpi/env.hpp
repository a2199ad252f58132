#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfpi/dataset.hpp"
#include "cfpi/gaussian.hpp"
#include "cfpi/operators.hpp"
#include "cfpi/rng.hpp"

namespace cfpi {

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  double action_low = -1.0;
  double action_high = 1.0;
  std::size_t horizon = 1;
  double gamma = 0.99;      // discount the training configs use for this task
  double random_ref = 0.0;  // raw-return anchors for normalized scores
  double expert_ref = 1.0;
};

// Stateless world model: step() is a pure function of (state, action, rng),
// which keeps episode rollouts trivially parallel.
class Env {
public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(Rng& rng) const = 0;

  struct Step {
    std::vector<double> state;
    double reward = 0.0;
    bool done = false;
  };
  virtual Step step(std::span<const double> state,
                    std::span<const double> action, Rng& rng) const = 0;
};

class Policy {
public:
  virtual ~Policy() = default;
  virtual std::vector<double> act(std::span<const double> state,
                                  Rng& rng) const = 0;
};

class UniformRandomPolicy : public Policy {
public:
  UniformRandomPolicy(std::size_t action_dim, double low, double high)
      : dim_(action_dim), low_(low), high_(high) {}
  std::vector<double> act(std::span<const double>, Rng& rng) const override;

private:
  std::size_t dim_;
  double low_, high_;
};

class ConstantPolicy : public Policy {
public:
  explicit ConstantPolicy(std::vector<double> action)
      : action_(std::move(action)) {}
  std::vector<double> act(std::span<const double>, Rng&) const override {
    return action_;
  }

private:
  std::vector<double> action_;
};

// State-independent stochastic policy drawing from a fixed mixture.
class FixedMixturePolicy : public Policy {
public:
  explicit FixedMixturePolicy(GaussianMixture m) : model_(std::move(m)) {}
  std::vector<double> act(std::span<const double>, Rng& rng) const override {
    return sample(model_, rng);
  }
  const GaussianMixture& model() const { return model_; }

private:
  GaussianMixture model_;
};

// PD controller toward a target point with optional exploration noise;
// the experts and the deliberately mediocre controllers for PointMass2D.
class PdControllerPolicy : public Policy {
public:
  PdControllerPolicy(std::vector<double> target, double kp, double kd,
                     double noise_sd, double low, double high)
      : target_(std::move(target)), kp_(kp), kd_(kd), noise_sd_(noise_sd),
        low_(low), high_(high) {}
  std::vector<double> act(std::span<const double> state,
                          Rng& rng) const override;

private:
  std::vector<double> target_;
  double kp_, kd_, noise_sd_, low_, high_;
};

// --- Concrete tasks -------------------------------------------------------

// One-step d-dimensional bandit with reward -(a - a*)^T H (a - a*) for
// diagonal H. Exposes the exact critic and exact policy values, which lets
// improvement guarantees be checked without sampling error.
class QuadraticBandit : public Env {
public:
  QuadraticBandit();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(Rng& rng) const override;
  Step step(std::span<const double> state, std::span<const double> action,
            Rng& rng) const override;

  double analytic_action_value(std::span<const double> a) const;
  // E_{a~m}[Q(a)] in closed form (quadratic + variance penalty).
  double analytic_policy_value(const GaussianMixture& m) const;
  std::unique_ptr<QueryableCritic> analytic_critic() const;

  // Ground-truth data-collection models: two equal-variance modes, or a
  // single Gaussian for the one-component pipelines.
  GaussianMixture behavior_model() const;
  DiagGaussian behavior_model_single() const;

  const std::vector<double>& optimum() const { return a_star_; }
  const std::vector<double>& curvature() const { return h_; }

private:
  EnvSpec spec_;
  std::vector<double> a_star_;
  std::vector<double> h_;
};

// K-state chain with a 1-D continuous action that sets the probability of
// stepping right: P(right | a) = Phi(a / decision_width), realized moves
// clamped at the ends. Larger actions push right more reliably, so the true
// Q is strictly increasing in the action and the improvement step direction
// is meaningful everywhere the data reaches. decision_width = 0 degenerates
// to the deterministic sign rule (a < 0 left, a >= 0 right). States are
// embedded in [-1, 1]. The chain is continuing (done is never set); episodes
// are horizon-truncated, so learned critics estimate the stationary
// discounted Q which the tabular solver below reproduces exactly.
class ChainMdp : public Env {
public:
  explicit ChainMdp(std::size_t num_states = 5, double gamma = 0.9,
                    std::size_t horizon = 40, double decision_width = 0.25);
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(Rng& rng) const override;
  Step step(std::span<const double> state, std::span<const double> action,
            Rng& rng) const override;

  std::size_t num_states() const { return k_; }
  double embed(std::size_t state_index) const;
  std::size_t state_index(double embedded) const;
  static std::size_t action_bin(double a) { return a < 0.0 ? 0 : 1; }
  std::size_t transition(std::size_t state_index, std::size_t bin) const;
  double reward(std::size_t state_index, std::size_t bin) const;
  double decision_width() const { return width_; }
  // P(realized move is right | action).
  double p_right(double action) const;

  GaussianMixture behavior_model() const;  // 50/50 left/right modes

private:
  EnvSpec spec_;
  std::size_t k_;
  double width_;
};

// Exact discounted Q for the binned chain under a behavior that picks the
// right bin with probability p_right[k] in state k (value iteration to
// fixed point). Layout: q[k * 2 + bin].
std::vector<double> chain_dp_q(const ChainMdp& env,
                               std::span<const double> p_right,
                               double tol = 1e-13);
// Optimal-control variant (max over bins); used for the expert reference.
std::vector<double> chain_optimal_q(const ChainMdp& env, double tol = 1e-13);

// P(X >= 0) for a 1-D mixture; converts the chain behavior model into the
// bin probabilities chain_dp_q expects.
double prob_nonnegative_1d(const GaussianMixture& m);

// Planar point mass: state (px, py, vx, vy), action = force in [-1,1]^2,
// reward -0.1 * distance(position, goal). Episodes reset anywhere in the
// arena, so the expert PD controller (drives to the goal) and the mediocre
// damped controller (parks at an off-axis point) visit overlapping states
// everywhere, giving genuinely bimodal action data.
class PointMass2D : public Env {
public:
  PointMass2D();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(Rng& rng) const override;
  Step step(std::span<const double> state, std::span<const double> action,
            Rng& rng) const override;

  std::unique_ptr<Policy> expert_policy(double noise_sd = 0.02) const;
  std::unique_ptr<Policy> mediocre_policy(double noise_sd = 0.18) const;
  const std::vector<double>& goal() const { return goal_; }

private:
  EnvSpec spec_;
  std::vector<double> goal_;
  std::vector<double> offset_point_;
  double dt_ = 0.1;
  double damping_ = 0.9;
};

// --- Rollouts, scores, data generation ------------------------------------

struct RolloutStats {
  double mean_return = 0.0;
  std::vector<double> episode_returns;
};

// Undiscounted returns over `episodes` episodes; episode i draws all its
// randomness from rng.fork(i), so results are identical at any thread count.
RolloutStats rollout(const Env& env, const Policy& policy,
                     std::size_t episodes, const Rng& rng);

double normalized_score(double raw_return, const EnvSpec& spec);

// Rolls each policy for its fraction of episodes (deterministic block
// assignment) and records executed next-actions from the same policy;
// truncated episodes get a sampled (not executed) bootstrap action and
// done=0, true terminals get done=1 and a zero next-action.
Dataset generate_heterogeneous(const Env& env,
                               const std::vector<const Policy*>& policies,
                               std::span<const double> fractions,
                               std::span<const std::string> labels,
                               std::size_t episodes, const Rng& rng);

// --- Registry --------------------------------------------------------------

// Known names: quad-bandit-v0, chain-v0, pointmass-bimodal-v0. Reference
// scores are computed once per process from fixed-seed rollouts.
const Env& get_env(std::string_view name);
std::vector<std::string> env_names();

std::unique_ptr<Policy> make_random_policy(const Env& env);
std::unique_ptr<Policy> make_expert_policy(const Env& env);

struct BehaviorMix {
  std::vector<std::unique_ptr<Policy>> policies;
  std::vector<double> fractions;
  std::vector<std::string> labels;
};
// The standard heterogeneous data-collection mix for each task.
BehaviorMix make_behavior_mix(const Env& env);

}  // namespace cfpi
