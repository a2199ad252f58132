#include "cfpi/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cfpi/errors.hpp"

namespace cfpi {

namespace {

struct KindName {
  OperatorKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {OperatorKind::kSg, "sg"},
    {OperatorKind::kLse, "lse"},
    {OperatorKind::kJensen, "jensen"},
    {OperatorKind::kMg, "mg"},
    {OperatorKind::kModeSelect, "mode-select"},
    {OperatorKind::kEasyBcq, "ebcq"},
    {OperatorKind::kDet, "det"},
};

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace

std::string_view operator_kind_name(OperatorKind k) {
  for (const KindName& kn : kKindNames)
    if (kn.kind == k) return kn.name;
  throw std::invalid_argument("operator_kind_name: unknown kind");
}

OperatorKind operator_kind_from_name(std::string_view name) {
  for (const KindName& kn : kKindNames)
    if (kn.name == name) return kn.kind;
  throw std::invalid_argument("unknown operator: " + std::string(name));
}

std::vector<double> clip_action(std::vector<double> a,
                                const ActionBounds& bounds) {
  for (double& x : a) x = std::clamp(x, bounds.low, bounds.high);
  return a;
}

ImprovedPolicy::ImprovedPolicy(std::shared_ptr<const ConditionalModel> behavior,
                               std::shared_ptr<const QueryableCritic> critic,
                               const OperatorParams& params,
                               const ActionBounds& bounds)
    : behavior_(std::move(behavior)), critic_(std::move(critic)),
      params_(params), bounds_(bounds) {
  if (!behavior_ || !critic_)
    throw std::invalid_argument("ImprovedPolicy: null reference");
  if (!(bounds_.low < bounds_.high))
    throw std::invalid_argument("ImprovedPolicy: empty action box");
}

std::vector<double> ImprovedPolicy::act(std::span<const double> state,
                                        Rng&) const {
  return act_detailed(state).action;
}

CandidateAction ImprovedPolicy::act_detailed(
    std::span<const double> state) const {
  const GaussianMixture m = behavior_->condition(state);
  CandidateAction cand;
  switch (params_.kind) {
    case OperatorKind::kSg: {
      // Multi-component heads are merged first; the single-Gaussian rule
      // needs a single anchor.
      DiagGaussian anchor = m.components.front();
      if (m.size() > 1) {
        PseudoGaussian pg = pseudo_gaussian(m);
        anchor = DiagGaussian(std::move(pg.mean), std::move(pg.var));
      }
      CriticQuery q = critic_->query(state, anchor.mean);
      std::vector<double> a = improve_sg(
          anchor, {std::move(q.action_gradient), anchor.mean}, params_.log_tau);
      const double qv = critic_->value(state, a);
      cand = {std::move(a), CandidateSource::kSingleGaussian, qv};
      break;
    }
    case OperatorKind::kLse: {
      std::vector<ActionGradient> grads(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.weights[i] <= 0.0) continue;
        CriticQuery q = critic_->query(state, m.components[i].mean);
        grads[i] = {std::move(q.action_gradient), m.components[i].mean};
      }
      cand = improve_lse(m, grads, params_.log_tau,
                         [&](std::span<const double> a) {
                           return critic_->value(state, a);
                         });
      break;
    }
    case OperatorKind::kJensen: {
      PseudoGaussian pg = pseudo_gaussian(m);
      CriticQuery q = critic_->query(state, pg.mean);
      std::vector<double> a = improve_jensen(
          m, {std::move(q.action_gradient), pg.mean}, params_.log_tau);
      const double qv = critic_->value(state, a);
      cand = {std::move(a), CandidateSource::kJensen, qv};
      break;
    }
    case OperatorKind::kMg:
      cand = improve_mg(m, *critic_, state, params_.log_tau);
      break;
    case OperatorKind::kModeSelect:
      cand = mode_select(m, *critic_, state, params_.mode_threshold);
      break;
    case OperatorKind::kEasyBcq: {
      Rng r = Rng(params_.sample_seed)
                  .fork(fnv1a64(state.data(), state.size_bytes()));
      cand = easy_bcq(m, *critic_, state, params_.m_samples, r);
      break;
    }
    case OperatorKind::kDet: {
      Rng r = Rng(params_.sample_seed)
                  .fork(fnv1a64(state.data(), state.size_bytes()));
      cand = improve_det_stochastic(m, *critic_, state, params_.det_delta,
                                    params_.m_samples, r);
      break;
    }
  }
  std::vector<double> clipped = clip_action(cand.action, bounds_);
  if (clipped != cand.action) {
    cand.action = std::move(clipped);
    cand.q_value = critic_->value(state, cand.action);
  } else {
    cand.action = std::move(clipped);
  }
  return cand;
}

std::vector<double> ModelMeanPolicy::act(std::span<const double> state,
                                         Rng&) const {
  const GaussianMixture m = behavior_->condition(state);
  std::vector<double> a(m.dim(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t k = 0; k < m.dim(); ++k)
      a[k] += m.weights[i] * m.components[i].mean[k];
  return clip_action(std::move(a), bounds_);
}

std::vector<double> ModelSamplePolicy::act(std::span<const double> state,
                                           Rng& rng) const {
  return clip_action(sample(behavior_->condition(state), rng), bounds_);
}

namespace {

// Stream ids under the run seed. Fixed so that one_step is exactly the
// rounds = 0 case of multi_step and the iterative path shares pretraining.
enum : std::uint64_t {
  kStreamBehaviorInit = 0,
  kStreamBcTrain = 1,
  kStreamCriticInit = 2,
  kStreamSarsaTrain = 3,
  kStreamSampleSeed = 4,
  kStreamRefineBase = 5,  // + round index; the iterative phase uses base + 0
};

Pipeline pretrain(const Dataset& data, const PipelineConfig& cfg,
                  std::uint64_t seed) {
  data.validate();
  const Rng root(seed);

  Rng r_init = root.fork(kStreamBehaviorInit);
  auto behavior = std::make_shared<BehaviorHead>(
      data.state_dim, data.action_dim, cfg.bc_components, cfg.bc_hidden,
      r_init);
  BcConfig bc;
  bc.steps = cfg.bc_steps;
  bc.batch = cfg.bc_batch;
  bc.lr = cfg.bc_lr;
  bc.log_every = cfg.log_every;
  Rng r_bc = root.fork(kStreamBcTrain);
  BcLog bc_log = behavior->train(data, bc, r_bc);

  CriticConfig qc;
  qc.n_quantiles = cfg.n_quantiles;
  qc.hidden = cfg.q_hidden;
  Rng r_qinit = root.fork(kStreamCriticInit);
  auto critic =
      std::make_shared<CriticPair>(data.state_dim, data.action_dim, qc, r_qinit);
  SarsaConfig sc;
  sc.steps = cfg.sarsa_steps;
  sc.batch = cfg.sarsa_batch;
  sc.lr = cfg.sarsa_lr;
  sc.gamma = cfg.gamma;
  sc.polyak = cfg.polyak;
  sc.log_every = cfg.log_every;
  Rng r_sarsa = root.fork(kStreamSarsaTrain);
  TrainLog q_log = critic->sarsa_train(data, sc, r_sarsa);

  Pipeline p;
  p.behavior = std::move(behavior);
  p.critic = std::move(critic);
  p.bc_log = std::move(bc_log);
  p.q_log = std::move(q_log);
  return p;
}

OperatorParams resolved_params(const PipelineConfig& cfg, std::uint64_t seed) {
  OperatorParams op = cfg.op;
  op.sample_seed = Rng(seed).fork(kStreamSampleSeed).root();
  return op;
}

void gather_rows(const std::vector<double>& src, std::size_t dim,
                 std::span<const std::size_t> idx, std::vector<double>& dst) {
  dst.resize(idx.size() * dim);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(src.data() + idx[r] * dim, dim, dst.data() + r * dim);
}

}  // namespace

Pipeline one_step(const Dataset& data, const PipelineConfig& cfg,
                  std::uint64_t seed) {
  return multi_step(data, cfg, EvalRoundConfig{}, 0, seed);
}

Pipeline multi_step(const Dataset& data, const PipelineConfig& cfg,
                    const EvalRoundConfig& round_cfg, std::size_t rounds,
                    std::uint64_t seed) {
  Pipeline p = pretrain(data, cfg, seed);
  const OperatorParams op = resolved_params(cfg, seed);
  const Rng root(seed);
  const std::size_t n = data.size();

  std::vector<std::size_t> idx(round_cfg.batch);
  std::vector<double> bs, ba, bns, bna, br, bd;
  for (std::size_t round = 0; round < rounds; ++round) {
    // The round's policy reads a frozen copy of the critic; the online nets
    // are regressed toward that fixed policy's value.
    auto frozen = std::make_shared<CriticPair>(*p.critic);
    ImprovedPolicy round_policy(p.behavior, frozen, op, cfg.bounds);

    Adam opt1(p.critic->net(0), round_cfg.lr);
    Adam opt2(p.critic->net(1), round_cfg.lr);
    Rng rng = root.fork(kStreamRefineBase + round);
    for (std::size_t step = 1; step <= round_cfg.steps_per_round; ++step) {
      for (std::size_t r = 0; r < round_cfg.batch; ++r)
        idx[r] = rng.uniform_int(n);
      gather_rows(data.states, data.state_dim, idx, bs);
      gather_rows(data.actions, data.action_dim, idx, ba);
      gather_rows(data.next_states, data.state_dim, idx, bns);
      gather_rows(data.rewards, 1, idx, br);
      gather_rows(data.dones, 1, idx, bd);
      bna.resize(round_cfg.batch * data.action_dim);
      for (std::size_t r = 0; r < round_cfg.batch; ++r) {
        std::span<const double> ns(bns.data() + r * data.state_dim,
                                   data.state_dim);
        std::vector<double> a = round_policy.act_detailed(ns).action;
        std::copy_n(a.data(), data.action_dim,
                    bna.data() + r * data.action_dim);
      }
      std::vector<double> y = p.critic->td_targets(bns, bna, br, bd,
                                                   round_cfg.batch, cfg.gamma);
      CriticPair::MseStep ms =
          p.critic->mse_step(bs, ba, y, round_cfg.batch, opt1, opt2);
      if (!std::isfinite(ms.loss1) || !std::isfinite(ms.loss2))
        throw NumericalError("policy evaluation loss diverged");
      p.critic->polyak_update(round_cfg.polyak);
      if (step == 1 || step % round_cfg.log_every == 0 ||
          step == round_cfg.steps_per_round)
        p.refine_log.rows.push_back({round * round_cfg.steps_per_round + step,
                                     ms.loss1, ms.loss2, mean_of(y)});
    }
  }

  p.policy = std::make_shared<ImprovedPolicy>(p.behavior, p.critic, op,
                                              cfg.bounds);
  return p;
}

Pipeline iterate(const Dataset& data, const PipelineConfig& cfg,
                 const IterativeConfig& it, std::uint64_t seed) {
  if (!(it.noise_clip > 0.0) || !(it.noise_sd >= 0.0))
    throw std::invalid_argument("iterate: need noise_clip > 0, noise_sd >= 0");
  Pipeline p = pretrain(data, cfg, seed);
  OperatorParams op = resolved_params(cfg, seed);
  op.kind = OperatorKind::kMg;  // the iterative loop is defined for mg only
  const Rng root(seed);
  const std::size_t n = data.size();
  const std::size_t ad = data.action_dim;

  Adam opt1(p.critic->net(0), it.lr);
  Adam opt2(p.critic->net(1), it.lr);
  Rng rng = root.fork(kStreamRefineBase);
  std::vector<std::size_t> idx(it.batch);
  std::vector<double> bs, ba, bns, bna, br, bd;
  for (std::size_t step = 1; step <= it.steps; ++step) {
    for (std::size_t r = 0; r < it.batch; ++r) idx[r] = rng.uniform_int(n);
    gather_rows(data.states, data.state_dim, idx, bs);
    gather_rows(data.actions, ad, idx, ba);
    gather_rows(data.next_states, data.state_dim, idx, bns);
    gather_rows(data.rewards, 1, idx, br);
    gather_rows(data.dones, 1, idx, bd);
    bna.resize(it.batch * ad);
    for (std::size_t r = 0; r < it.batch; ++r) {
      std::span<const double> ns(bns.data() + r * data.state_dim,
                                 data.state_dim);
      // Improved next action from the live online critics, smoothed with one
      // clipped noise draw per transition, then clipped to the action box.
      CandidateAction cand =
          improve_mg(p.behavior->condition(ns), *p.critic, ns, op.log_tau);
      for (std::size_t k = 0; k < ad; ++k) {
        const double eps = std::clamp(rng.normal(0.0, it.noise_sd),
                                      -it.noise_clip, it.noise_clip);
        bna[r * ad + k] = std::clamp(cand.action[k] + eps, cfg.bounds.low,
                                     cfg.bounds.high);
      }
    }
    std::vector<double> y =
        p.critic->td_targets(bns, bna, br, bd, it.batch, cfg.gamma);
    CriticPair::MseStep ms = p.critic->mse_step(bs, ba, y, it.batch, opt1, opt2);
    if (!std::isfinite(ms.loss1) || !std::isfinite(ms.loss2))
      throw NumericalError("iterative critic loss diverged");
    p.critic->polyak_update(it.polyak);
    if (step == 1 || step % it.log_every == 0 || step == it.steps)
      p.refine_log.rows.push_back({step, ms.loss1, ms.loss2, mean_of(y)});
  }

  p.policy = std::make_shared<ImprovedPolicy>(p.behavior, p.critic, op,
                                              cfg.bounds);
  return p;
}

SafetyReport safe_improvement_check(const Env& env, const Policy& improved,
                                    const Policy& behavior,
                                    std::size_t episodes, double margin_frac,
                                    const Rng& rng) {
  if (margin_frac < 0.0)
    throw std::invalid_argument("safe_improvement_check: negative margin");
  SafetyReport rep;
  rep.j_improved = rollout(env, improved, episodes, rng.fork(0)).mean_return;
  rep.j_behavior = rollout(env, behavior, episodes, rng.fork(1)).mean_return;
  rep.margin = margin_frac * std::abs(rep.j_behavior);
  rep.safe = rep.j_improved >= rep.j_behavior - rep.margin;
  return rep;
}

}  // namespace cfpi
