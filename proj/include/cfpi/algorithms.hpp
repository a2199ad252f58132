#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "cfpi/behavior.hpp"
#include "cfpi/constants.hpp"
#include "cfpi/critic.hpp"
#include "cfpi/env.hpp"
#include "cfpi/operators.hpp"

namespace cfpi {

enum class OperatorKind {
  kSg,          // single-Gaussian step from the (merged) behavior mean
  kLse,         // per-component trust regions, best candidate by critic
  kJensen,      // merged pseudo-Gaussian trust region
  kMg,          // better of lse and jensen by critic value
  kModeSelect,  // argmax critic over non-trivial component means
  kEasyBcq,     // argmax critic over sampled behavior actions
  kDet,         // best-of-samples anchor plus a Euclidean gradient step
};

// CLI spellings: sg, lse, jensen, mg, mode-select, ebcq, det.
std::string_view operator_kind_name(OperatorKind k);
OperatorKind operator_kind_from_name(std::string_view name);

struct OperatorParams {
  OperatorKind kind = OperatorKind::kMg;
  double log_tau = 0.5;       // trust region for sg / lse / jensen / mg
  double det_delta = 0.1;     // Euclidean step budget for det
  std::size_t m_samples = 5;  // behavior samples for ebcq / det
  double mode_threshold = kModeWeightThreshold;
  // Keys the per-state sampling streams of ebcq / det so those operators are
  // still deterministic functions of the state.
  std::uint64_t sample_seed = 0;
};

struct ActionBounds {
  double low = -1.0;
  double high = 1.0;
};

// The one place actions are clipped; the operators themselves never clip.
std::vector<double> clip_action(std::vector<double> a,
                                const ActionBounds& bounds);

// Deterministic policy: condition the behavior model on the state, apply the
// chosen operator against the critic, clip to bounds. The rollout rng is
// ignored; the sampling operators hash the state into a fixed stream instead.
class ImprovedPolicy : public Policy {
public:
  ImprovedPolicy(std::shared_ptr<const ConditionalModel> behavior,
                 std::shared_ptr<const QueryableCritic> critic,
                 const OperatorParams& params, const ActionBounds& bounds);

  std::vector<double> act(std::span<const double> state,
                          Rng& rng) const override;

  // Clipped action plus the winning candidate's source and critic value
  // (re-scored when clipping moved the action).
  CandidateAction act_detailed(std::span<const double> state) const;

  const OperatorParams& params() const { return params_; }
  const ActionBounds& bounds() const { return bounds_; }

private:
  std::shared_ptr<const ConditionalModel> behavior_;
  std::shared_ptr<const QueryableCritic> critic_;
  OperatorParams params_;
  ActionBounds bounds_;
};

// Mixture-mean baseline: sum_i w_i mu_i(s), clipped.
class ModelMeanPolicy : public Policy {
public:
  ModelMeanPolicy(std::shared_ptr<const ConditionalModel> behavior,
                  const ActionBounds& bounds)
      : behavior_(std::move(behavior)), bounds_(bounds) {}
  std::vector<double> act(std::span<const double> state,
                          Rng& rng) const override;

private:
  std::shared_ptr<const ConditionalModel> behavior_;
  ActionBounds bounds_;
};

// Samples the conditioned mixture; the Monte-Carlo stand-in for the true
// data-collection policy when estimating its return.
class ModelSamplePolicy : public Policy {
public:
  ModelSamplePolicy(std::shared_ptr<const ConditionalModel> behavior,
                    const ActionBounds& bounds)
      : behavior_(std::move(behavior)), bounds_(bounds) {}
  std::vector<double> act(std::span<const double> state,
                          Rng& rng) const override;

private:
  std::shared_ptr<const ConditionalModel> behavior_;
  ActionBounds bounds_;
};

struct PipelineConfig {
  std::size_t bc_components = 4;
  std::vector<std::size_t> bc_hidden = {64, 64};
  std::size_t bc_steps = 4000;
  std::size_t bc_batch = 256;
  double bc_lr = 1e-3;

  std::size_t n_quantiles = 8;
  std::vector<std::size_t> q_hidden = {64, 64};
  std::size_t sarsa_steps = 8000;
  std::size_t sarsa_batch = 128;
  double sarsa_lr = 1e-3;
  double gamma = 0.99;
  double polyak = 5e-3;
  std::size_t log_every = 200;

  OperatorParams op;
  ActionBounds bounds;
};

struct Pipeline {
  std::shared_ptr<BehaviorHead> behavior;
  std::shared_ptr<CriticPair> critic;
  std::shared_ptr<ImprovedPolicy> policy;
  BcLog bc_log;
  TrainLog q_log;
  TrainLog refine_log;  // evaluation rounds / iterative phase
};

// Budget for one policy-evaluation round of the multi-step template; rounds
// run for a fixed step count rather than to a convergence test.
struct EvalRoundConfig {
  std::size_t steps_per_round = 1000;
  std::size_t batch = 128;
  double lr = 3e-4;
  double polyak = 5e-3;
  std::size_t log_every = 100;
};

// Fit the behavior head, fit the on-policy critic, wrap the operator once.
// All randomness descends from `seed` through fixed stream ids, so identical
// (dataset, config, seed) triples reproduce bit-identical pipelines.
Pipeline one_step(const Dataset& data, const PipelineConfig& cfg,
                  std::uint64_t seed);

// one_step followed by `rounds` alternations of frozen-policy evaluation
// (TD regression toward the round policy's own actions) and re-application
// of the operator. rounds = 0 is exactly one_step.
Pipeline multi_step(const Dataset& data, const PipelineConfig& cfg,
                    const EvalRoundConfig& round_cfg, std::size_t rounds,
                    std::uint64_t seed);

struct IterativeConfig {
  std::size_t steps = 2000;
  std::size_t batch = 64;
  double lr = 3e-4;
  double noise_sd = 0.1;   // smoothing noise on improved next actions
  double noise_clip = 0.3;
  double polyak = 5e-3;
  std::size_t log_every = 100;
};

// Pretrains like one_step, then interleaves: a'(s') = clip(mg(s') +
// clip(eps, -c, c), bounds) with one noise draw per sampled transition,
// targets r + gamma (1-d) min of target-net extractions at a', one squared
// error step on both online nets, Polyak target update. The improvement
// operator inside the loop is always the mixture one (kMg) on the live
// online critics; the returned policy wraps the final critic the same way.
Pipeline iterate(const Dataset& data, const PipelineConfig& cfg,
                 const IterativeConfig& it, std::uint64_t seed);

struct SafetyReport {
  double j_improved = 0.0;
  double j_behavior = 0.0;
  double margin = 0.0;
  bool safe = false;  // j_improved >= j_behavior - margin
};

// Monte-Carlo returns for both policies on the simulator; margin defaults
// scale with |J_behavior| so the check is unit-free.
SafetyReport safe_improvement_check(const Env& env, const Policy& improved,
                                    const Policy& behavior,
                                    std::size_t episodes, double margin_frac,
                                    const Rng& rng);

}  // namespace cfpi
