#include "cfpi/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfpi/constants.hpp"
#include "cfpi/errors.hpp"

namespace cfpi {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

BehaviorHead::BehaviorHead(std::size_t state_dim, std::size_t action_dim,
                           std::size_t components,
                           std::vector<std::size_t> hidden, Rng& rng)
    : action_dim_(action_dim), components_(components) {
  if (components == 0 || action_dim == 0)
    throw std::invalid_argument("BehaviorHead: zero size");
  const std::size_t out = components * (2 * action_dim + 1);
  Rng init = rng.fork(7);
  trunk_ = Mlp::init(state_dim, out, std::move(hidden), init);
  // Spread the mean-head biases so components start apart; a symmetric
  // start would collapse the mixture onto one mode.
  for (std::size_t i = 0; i < components * action_dim; ++i)
    trunk_.b.back()[i] = 0.5 * init.normal();
}

GaussianMixture BehaviorHead::condition(std::span<const double> state) const {
  std::vector<double> out;
  mlp_forward_values(trunk_, state, 1, out);
  const std::size_t nd = components_ * action_dim_;

  std::vector<double> weights(components_);
  double hi = out[2 * nd];
  for (std::size_t i = 1; i < components_; ++i)
    hi = std::max(hi, out[2 * nd + i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < components_; ++i) {
    weights[i] = std::exp(out[2 * nd + i] - hi);
    sum += weights[i];
  }
  for (double& w : weights) w /= sum;

  std::vector<DiagGaussian> comps;
  comps.reserve(components_);
  for (std::size_t i = 0; i < components_; ++i) {
    std::vector<double> mean(out.begin() + i * action_dim_,
                             out.begin() + (i + 1) * action_dim_);
    std::vector<double> var(action_dim_);
    for (std::size_t k = 0; k < action_dim_; ++k)
      var[k] = std::max(std::exp(out[nd + i * action_dim_ + k]), kVarFloor);
    comps.emplace_back(std::move(mean), std::move(var));
  }
  return GaussianMixture(std::move(weights), std::move(comps));
}

Tape::Id BehaviorHead::build_loss(Tape& tape, MlpGraph& graph,
                                  std::span<const double> states,
                                  std::span<const double> actions,
                                  std::size_t batch) const {
  const std::size_t nd = components_ * action_dim_;
  Tape::Id s = tape.leaf(batch, trunk_.in_dim, states);
  graph = mlp_forward(tape, trunk_, s);
  Tape::Id means = tape.slice_cols(graph.out, 0, nd);
  Tape::Id logvars = tape.slice_cols(graph.out, nd, nd);
  Tape::Id logits = tape.slice_cols(graph.out, 2 * nd, components_);

  Tape::Id a = tape.leaf(batch, action_dim_, actions);
  Tape::Id at = tape.tile_cols(a, components_);
  Tape::Id sq = tape.square(tape.sub(at, means));
  Tape::Id varf = tape.exp_floor(logvars, kVarFloor);
  // log N_i(a) = -0.5 sum_k [log 2pi + log var + (a - mu)^2 / var]
  Tape::Id inner = tape.add_const(
      tape.add(tape.log_(varf), tape.mul(sq, tape.recip(varf))), kLog2Pi);
  Tape::Id comp_logp =
      tape.scale(tape.group_sum_cols(inner, components_, action_dim_), -0.5);
  Tape::Id joint = tape.add(comp_logp, tape.log_softmax_rows(logits));
  Tape::Id ll = tape.logsumexp_rows(joint);
  return tape.scale(tape.mean_all(ll), -1.0);
}

double BehaviorHead::loss_value(std::span<const double> states,
                                std::span<const double> actions,
                                std::size_t batch) const {
  Tape tape;
  MlpGraph graph;
  Tape::Id loss = build_loss(tape, graph, states, actions, batch);
  return tape.val(loss)[0];
}

BcLog BehaviorHead::train(const Dataset& data, const BcConfig& cfg,
                          Rng& rng) {
  data.validate();
  if (data.state_dim != trunk_.in_dim || data.action_dim != action_dim_)
    throw std::invalid_argument("BehaviorHead::train: dataset dims mismatch");
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("BehaviorHead::train: empty dataset");

  Adam opt(trunk_, cfg.lr);
  BcLog log;
  const std::size_t B = cfg.batch;
  std::vector<double> bs(B * data.state_dim), ba(B * data.action_dim);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t r = 0; r < B; ++r) {
      const std::size_t i = rng.uniform_int(n);
      std::copy_n(data.states.data() + i * data.state_dim, data.state_dim,
                  bs.data() + r * data.state_dim);
      std::copy_n(data.actions.data() + i * data.action_dim, data.action_dim,
                  ba.data() + r * data.action_dim);
    }
    Tape tape;
    MlpGraph graph;
    Tape::Id loss = build_loss(tape, graph, bs, ba, B);
    tape.backward(loss);
    const double lv = tape.val(loss)[0];
    if (!std::isfinite(lv)) throw NumericalError("bc train loss diverged");
    opt.step(trunk_, tape, graph);
    if (step == 1 || step % cfg.log_every == 0 || step == cfg.steps)
      log.rows.push_back({step, lv});
  }
  return log;
}

void BehaviorHead::save(const std::string& path, std::uint64_t seed,
                        std::uint64_t steps) const {
  save_checkpoint(path, trunk_, seed, steps);
}

BehaviorHead BehaviorHead::load(const std::string& path,
                                std::size_t action_dim,
                                std::size_t components) {
  BehaviorHead h;
  h.trunk_ = load_checkpoint(path);
  h.action_dim_ = action_dim;
  h.components_ = components;
  if (h.trunk_.out_dim != components * (2 * action_dim + 1))
    throw std::runtime_error("BehaviorHead::load: head shape mismatch");
  return h;
}

}  // namespace cfpi
