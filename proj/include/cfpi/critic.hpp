#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cfpi/autodiff.hpp"
#include "cfpi/dataset.hpp"
#include "cfpi/operators.hpp"
#include "cfpi/rng.hpp"

namespace cfpi {

struct CriticConfig {
  std::size_t n_quantiles = 8;
  std::vector<std::size_t> hidden = {64, 64};
};

struct SarsaConfig {
  std::size_t steps = 8000;
  std::size_t batch = 128;
  double lr = 1e-3;
  double gamma = 0.99;
  // Per-step target mixing: target <- (1-polyak)*target + polyak*online.
  double polyak = 5e-3;
  std::size_t log_every = 200;
};

struct TrainLogRow {
  std::size_t step = 0;
  double loss1 = 0.0;
  double loss2 = 0.0;
  double q_mean = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
};

// Two independently initialized quantile critics plus Polyak-averaged target
// copies. A critic maps (s, a) to n_quantiles quantile heads on the uniform
// fraction grid; the scalar read-out averages the step-function quantile
// estimate over a 32-midpoint grid (equal to the plain head mean whenever
// n_quantiles divides 32) and the conservative value/gradient comes from the
// minimum of the two read-outs (gradient from the minimizing net, first net
// on ties).
class CriticPair : public QueryableCritic {
public:
  CriticPair(std::size_t state_dim, std::size_t action_dim,
             const CriticConfig& cfg, Rng& rng);

  // On-policy distributional TD on recorded next actions: each net regresses
  // its quantile heads toward r + gamma * (1-done) * Z_target(s', a') under
  // the quantile Huber objective; terminal rows drop the bootstrap term.
  // When checkpoint_every > 0, on_checkpoint(step) runs at that cadence and
  // after the final step (validation-curve hook).
  TrainLog sarsa_train(const Dataset& data, const SarsaConfig& cfg, Rng& rng,
                       const std::function<void(std::size_t)>& on_checkpoint =
                           nullptr,
                       std::size_t checkpoint_every = 0);

  double extract_q(std::span<const double> state,
                   std::span<const double> action) const;
  CriticQuery query(std::span<const double> state,
                    std::span<const double> action) const override;

  void extract_q_batch(std::span<const double> states,
                       std::span<const double> actions, std::size_t batch,
                       std::vector<double>& out) const;

  // y = r + gamma * (1-done) * min over target nets of the extraction at
  // (s', a'); the regression target of the iterative algorithm.
  std::vector<double> td_targets(std::span<const double> next_states,
                                 std::span<const double> next_actions,
                                 std::span<const double> rewards,
                                 std::span<const double> dones,
                                 std::size_t batch, double gamma) const;

  // One optimizer step regressing each net's extraction to y (squared
  // error); optimizers are owned by the caller so training sessions compose.
  struct MseStep {
    double loss1 = 0.0;
    double loss2 = 0.0;
  };
  MseStep mse_step(std::span<const double> states,
                   std::span<const double> actions,
                   std::span<const double> targets, std::size_t batch,
                   Adam& opt1, Adam& opt2);

  void polyak_update(double rate);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t n_quantiles() const { return n_quantiles_; }
  const Mlp& net(std::size_t k) const { return k == 0 ? q1_ : q2_; }
  Mlp& net(std::size_t k) { return k == 0 ? q1_ : q2_; }

  // Two checkpoint files <prefix>.q1 / <prefix>.q2; targets are reset to the
  // online nets on load. state_dim cannot be recovered from the net shape
  // alone, so the caller supplies it.
  void save(const std::string& prefix, std::uint64_t seed,
            std::uint64_t steps) const;
  static CriticPair load(const std::string& prefix, std::size_t state_dim);

private:
  CriticPair() = default;

  double extract_one(const Mlp& net, std::span<const double> state,
                     std::span<const double> action) const;

  std::size_t state_dim_ = 0, action_dim_ = 0, n_quantiles_ = 0;
  Mlp q1_, q2_, t1_, t2_;
};

// Average of the step quantile function over the 32-midpoint grid.
double extract_from_heads(std::span<const double> heads);

// M scalar critics with the mean-minus-population-std read-out
//   lcb = mean_k Q_k - sqrt(mean_k (Q_k - mean)^2),
// which reduces to min(Q_1, Q_2) at M=2 and to Q_1 at M=1. The gradient
// differentiates the full expression; at (near-)zero std it falls back to
// the first member's gradient, matching the min-tie convention.
class EnsembleCritic : public QueryableCritic {
public:
  EnsembleCritic(std::size_t state_dim, std::size_t action_dim,
                 std::size_t members, std::vector<std::size_t> hidden,
                 Rng& rng);

  // Scalar SARSA: each member regresses to r + gamma * (1-done) *
  // Q_target_k(s', a') with its own target copy.
  TrainLog train(const Dataset& data, const SarsaConfig& cfg, Rng& rng);

  double lcb(std::span<const double> state,
             std::span<const double> action) const;
  CriticQuery query(std::span<const double> state,
                    std::span<const double> action) const override;

  std::size_t members() const { return nets_.size(); }

private:
  double member_value(const Mlp& net, std::span<const double> state,
                      std::span<const double> action) const;

  std::size_t state_dim_ = 0, action_dim_ = 0;
  std::vector<Mlp> nets_, targets_;
};

// Critic-quality validation against a trusted reference critic: hold out
// `val_fraction` of the data (shuffled split), train a fresh pair on the
// rest, and record the held-out mean squared gap between the reference's
// extraction and the fresh critic's extraction at every checkpoint.
struct ValidationCurve {
  std::vector<std::size_t> steps;
  std::vector<double> val_loss;
};

ValidationCurve kfold_validation_curve(const Dataset& data,
                                       const QueryableCritic& reference,
                                       const CriticConfig& critic_cfg,
                                       const SarsaConfig& train_cfg,
                                       double val_fraction,
                                       std::size_t n_checkpoints, Rng& rng);

}  // namespace cfpi
