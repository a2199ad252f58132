#include "cfpi/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cfpi/errors.hpp"

namespace cfpi {

namespace {

constexpr std::size_t kExtractGrid = 32;

// Column weights of the grid-averaged extraction: head j receives the share
// of the 32 midpoints that fall in its fraction bucket.
std::vector<double> extraction_weights(std::size_t n_heads) {
  std::vector<double> w(n_heads, 0.0);
  for (std::size_t m = 0; m < kExtractGrid; ++m) {
    const double rho = (static_cast<double>(m) + 0.5) /
                       static_cast<double>(kExtractGrid);
    std::size_t j = static_cast<std::size_t>(rho * static_cast<double>(n_heads));
    if (j >= n_heads) j = n_heads - 1;
    w[j] += 1.0 / static_cast<double>(kExtractGrid);
  }
  return w;
}

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericalError(std::string(what) + " diverged");
}

}  // namespace

double extract_from_heads(std::span<const double> heads) {
  const std::size_t n = heads.size();
  double acc = 0.0;
  for (std::size_t m = 0; m < kExtractGrid; ++m) {
    const double rho = (static_cast<double>(m) + 0.5) /
                       static_cast<double>(kExtractGrid);
    std::size_t j = static_cast<std::size_t>(rho * static_cast<double>(n));
    if (j >= n) j = n - 1;
    acc += heads[j];
  }
  return acc / static_cast<double>(kExtractGrid);
}

CriticPair::CriticPair(std::size_t state_dim, std::size_t action_dim,
                       const CriticConfig& cfg, Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim),
      n_quantiles_(cfg.n_quantiles) {
  if (state_dim == 0 || action_dim == 0 || cfg.n_quantiles == 0)
    throw std::invalid_argument("CriticPair: zero dimension");
  Rng r1 = rng.fork(1), r2 = rng.fork(2);
  q1_ = Mlp::init(state_dim + action_dim, n_quantiles_, cfg.hidden, r1);
  q2_ = Mlp::init(state_dim + action_dim, n_quantiles_, cfg.hidden, r2);
  t1_ = q1_;
  t2_ = q2_;
}

TrainLog CriticPair::sarsa_train(
    const Dataset& data, const SarsaConfig& cfg, Rng& rng,
    const std::function<void(std::size_t)>& on_checkpoint,
    std::size_t checkpoint_every) {
  data.validate();
  if (data.state_dim != state_dim_ || data.action_dim != action_dim_)
    throw std::invalid_argument("sarsa_train: dataset dims mismatch");
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("sarsa_train: empty dataset");

  Adam opt1(q1_, cfg.lr), opt2(q2_, cfg.lr);
  TrainLog log;
  const std::size_t B = cfg.batch;
  const std::size_t xd = state_dim_ + action_dim_;
  std::vector<std::size_t> idx(B);
  std::vector<double> x(B * xd), x2(B * xd);
  std::vector<double> tq(B * n_quantiles_);
  std::vector<double> y1(B * n_quantiles_), y2(B * n_quantiles_);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t r = 0; r < B; ++r) idx[r] = rng.uniform_int(n);
    for (std::size_t r = 0; r < B; ++r) {
      std::copy_n(data.states.data() + idx[r] * state_dim_, state_dim_,
                  x.data() + r * xd);
      std::copy_n(data.actions.data() + idx[r] * action_dim_, action_dim_,
                  x.data() + r * xd + state_dim_);
      std::copy_n(data.next_states.data() + idx[r] * state_dim_, state_dim_,
                  x2.data() + r * xd);
      std::copy_n(data.next_actions.data() + idx[r] * action_dim_,
                  action_dim_, x2.data() + r * xd + state_dim_);
    }

    // Per-net distributional targets from that net's own target copy.
    for (int k = 0; k < 2; ++k) {
      mlp_forward_values(k == 0 ? t1_ : t2_, x2, B, tq);
      std::vector<double>& y = k == 0 ? y1 : y2;
      for (std::size_t r = 0; r < B; ++r) {
        const double scale = cfg.gamma * (1.0 - data.dones[idx[r]]);
        const double rew = data.rewards[idx[r]];
        for (std::size_t i = 0; i < n_quantiles_; ++i)
          y[r * n_quantiles_ + i] = rew + scale * tq[r * n_quantiles_ + i];
      }
    }

    double losses[2] = {0.0, 0.0};
    double q_mean = 0.0;
    for (int k = 0; k < 2; ++k) {
      Tape tape;
      Tape::Id xin = tape.leaf(B, xd, x);
      MlpGraph g = mlp_forward(tape, k == 0 ? q1_ : q2_, xin);
      Tape::Id loss = tape.quantile_huber_loss(g.out, k == 0 ? y1 : y2);
      tape.backward(loss);
      losses[k] = tape.val(loss)[0];
      check_finite(losses[k], "sarsa_train loss");
      if (k == 0) {
        std::span<const double> pred = tape.val(g.out);
        for (std::size_t r = 0; r < B; ++r)
          q_mean +=
              extract_from_heads(pred.subspan(r * n_quantiles_, n_quantiles_));
        q_mean /= static_cast<double>(B);
      }
      (k == 0 ? opt1 : opt2).step(k == 0 ? q1_ : q2_, tape, g);
    }
    polyak_update(cfg.polyak);

    if (step == 1 || step % cfg.log_every == 0 || step == cfg.steps)
      log.rows.push_back({step, losses[0], losses[1], q_mean});
    if (on_checkpoint && checkpoint_every > 0 &&
        (step % checkpoint_every == 0 || step == cfg.steps))
      on_checkpoint(step);
  }
  return log;
}

double CriticPair::extract_one(const Mlp& net, std::span<const double> state,
                               std::span<const double> action) const {
  std::vector<double> x(state_dim_ + action_dim_);
  std::copy(state.begin(), state.end(), x.begin());
  std::copy(action.begin(), action.end(), x.begin() + state_dim_);
  std::vector<double> heads;
  mlp_forward_values(net, x, 1, heads);
  return extract_from_heads(heads);
}

double CriticPair::extract_q(std::span<const double> state,
                             std::span<const double> action) const {
  return std::min(extract_one(q1_, state, action),
                  extract_one(q2_, state, action));
}

CriticQuery CriticPair::query(std::span<const double> state,
                              std::span<const double> action) const {
  const double v1 = extract_one(q1_, state, action);
  const double v2 = extract_one(q2_, state, action);
  const Mlp& chosen = v1 <= v2 ? q1_ : q2_;  // tie -> first net

  Tape tape;
  Tape::Id s = tape.leaf(1, state_dim_, state);
  Tape::Id a = tape.leaf(1, action_dim_, action);
  Tape::Id x = tape.concat_cols(s, a);
  MlpGraph g = mlp_forward(tape, chosen, x);
  std::vector<double> w = extraction_weights(n_quantiles_);
  Tape::Id wleaf = tape.leaf(1, n_quantiles_, w);
  Tape::Id readout = tape.sum_all(tape.mul(g.out, wleaf));
  tape.backward(readout);

  CriticQuery out;
  out.value = std::min(v1, v2);
  std::span<const double> ga = tape.grad(a);
  out.action_gradient.assign(ga.begin(), ga.end());
  return out;
}

void CriticPair::extract_q_batch(std::span<const double> states,
                                 std::span<const double> actions,
                                 std::size_t batch,
                                 std::vector<double>& out) const {
  const std::size_t xd = state_dim_ + action_dim_;
  std::vector<double> x(batch * xd);
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy_n(states.data() + r * state_dim_, state_dim_,
                x.data() + r * xd);
    std::copy_n(actions.data() + r * action_dim_, action_dim_,
                x.data() + r * xd + state_dim_);
  }
  std::vector<double> h1, h2;
  mlp_forward_values(q1_, x, batch, h1);
  mlp_forward_values(q2_, x, batch, h2);
  out.resize(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    std::span<const double> s1(h1.data() + r * n_quantiles_, n_quantiles_);
    std::span<const double> s2(h2.data() + r * n_quantiles_, n_quantiles_);
    out[r] = std::min(extract_from_heads(s1), extract_from_heads(s2));
  }
}

std::vector<double> CriticPair::td_targets(std::span<const double> next_states,
                                           std::span<const double> next_actions,
                                           std::span<const double> rewards,
                                           std::span<const double> dones,
                                           std::size_t batch,
                                           double gamma) const {
  const std::size_t xd = state_dim_ + action_dim_;
  std::vector<double> x(batch * xd);
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy_n(next_states.data() + r * state_dim_, state_dim_,
                x.data() + r * xd);
    std::copy_n(next_actions.data() + r * action_dim_, action_dim_,
                x.data() + r * xd + state_dim_);
  }
  std::vector<double> h1, h2;
  mlp_forward_values(t1_, x, batch, h1);
  mlp_forward_values(t2_, x, batch, h2);
  std::vector<double> y(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    std::span<const double> s1(h1.data() + r * n_quantiles_, n_quantiles_);
    std::span<const double> s2(h2.data() + r * n_quantiles_, n_quantiles_);
    const double cont = std::min(extract_from_heads(s1),
                                 extract_from_heads(s2));
    y[r] = rewards[r] + gamma * (1.0 - dones[r]) * cont;
  }
  return y;
}

CriticPair::MseStep CriticPair::mse_step(std::span<const double> states,
                                         std::span<const double> actions,
                                         std::span<const double> targets,
                                         std::size_t batch, Adam& opt1,
                                         Adam& opt2) {
  const std::size_t xd = state_dim_ + action_dim_;
  std::vector<double> x(batch * xd);
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy_n(states.data() + r * state_dim_, state_dim_,
                x.data() + r * xd);
    std::copy_n(actions.data() + r * action_dim_, action_dim_,
                x.data() + r * xd + state_dim_);
  }
  std::vector<double> w = extraction_weights(n_quantiles_);
  std::vector<double> wtile(batch * n_quantiles_);
  for (std::size_t r = 0; r < batch; ++r)
    std::copy(w.begin(), w.end(), wtile.begin() + r * n_quantiles_);

  MseStep out;
  for (int k = 0; k < 2; ++k) {
    Tape tape;
    Tape::Id xin = tape.leaf(batch, xd, x);
    MlpGraph g = mlp_forward(tape, k == 0 ? q1_ : q2_, xin);
    Tape::Id wleaf = tape.leaf(batch, n_quantiles_, wtile);
    Tape::Id qrow = tape.group_sum_cols(tape.mul(g.out, wleaf), 1,
                                        n_quantiles_);
    Tape::Id yleaf = tape.leaf(batch, 1, targets);
    Tape::Id loss = tape.mean_all(tape.square(tape.sub(qrow, yleaf)));
    tape.backward(loss);
    const double lv = tape.val(loss)[0];
    check_finite(lv, "mse_step loss");
    (k == 0 ? out.loss1 : out.loss2) = lv;
    (k == 0 ? opt1 : opt2).step(k == 0 ? q1_ : q2_, tape, g);
  }
  return out;
}

void CriticPair::polyak_update(double rate) {
  auto mix = [rate](Mlp& target, const Mlp& online) {
    for (std::size_t l = 0; l < online.num_layers(); ++l) {
      for (std::size_t i = 0; i < online.W[l].size(); ++i)
        target.W[l][i] = (1.0 - rate) * target.W[l][i] + rate * online.W[l][i];
      for (std::size_t i = 0; i < online.b[l].size(); ++i)
        target.b[l][i] = (1.0 - rate) * target.b[l][i] + rate * online.b[l][i];
    }
  };
  mix(t1_, q1_);
  mix(t2_, q2_);
}

void CriticPair::save(const std::string& prefix, std::uint64_t seed,
                      std::uint64_t steps) const {
  save_checkpoint(prefix + ".q1", q1_, seed, steps);
  save_checkpoint(prefix + ".q2", q2_, seed, steps);
}

CriticPair CriticPair::load(const std::string& prefix,
                            std::size_t state_dim) {
  CriticPair p;
  p.q1_ = load_checkpoint(prefix + ".q1");
  p.q2_ = load_checkpoint(prefix + ".q2");
  if (p.q1_.in_dim != p.q2_.in_dim || p.q1_.out_dim != p.q2_.out_dim)
    throw std::runtime_error("CriticPair::load: mismatched nets");
  if (state_dim == 0 || state_dim >= p.q1_.in_dim)
    throw std::invalid_argument("CriticPair::load: bad state_dim");
  p.state_dim_ = state_dim;
  p.action_dim_ = p.q1_.in_dim - state_dim;
  p.n_quantiles_ = p.q1_.out_dim;
  p.t1_ = p.q1_;
  p.t2_ = p.q2_;
  return p;
}

EnsembleCritic::EnsembleCritic(std::size_t state_dim, std::size_t action_dim,
                               std::size_t members,
                               std::vector<std::size_t> hidden, Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim) {
  if (members == 0)
    throw std::invalid_argument("EnsembleCritic: zero members");
  for (std::size_t k = 0; k < members; ++k) {
    Rng rk = rng.fork(k + 1);
    nets_.push_back(Mlp::init(state_dim + action_dim, 1, hidden, rk));
  }
  targets_ = nets_;
}

TrainLog EnsembleCritic::train(const Dataset& data, const SarsaConfig& cfg,
                               Rng& rng) {
  data.validate();
  const std::size_t n = data.size();
  const std::size_t B = cfg.batch;
  const std::size_t xd = state_dim_ + action_dim_;
  std::vector<Adam> opts;
  opts.reserve(nets_.size());
  for (const Mlp& net : nets_) opts.emplace_back(net, cfg.lr);

  TrainLog log;
  std::vector<std::size_t> idx(B);
  std::vector<double> x(B * xd), x2(B * xd), tv, y(B);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t r = 0; r < B; ++r) idx[r] = rng.uniform_int(n);
    for (std::size_t r = 0; r < B; ++r) {
      std::copy_n(data.states.data() + idx[r] * state_dim_, state_dim_,
                  x.data() + r * xd);
      std::copy_n(data.actions.data() + idx[r] * action_dim_, action_dim_,
                  x.data() + r * xd + state_dim_);
      std::copy_n(data.next_states.data() + idx[r] * state_dim_, state_dim_,
                  x2.data() + r * xd);
      std::copy_n(data.next_actions.data() + idx[r] * action_dim_,
                  action_dim_, x2.data() + r * xd + state_dim_);
    }

    double loss_acc = 0.0, q_acc = 0.0;
    for (std::size_t k = 0; k < nets_.size(); ++k) {
      mlp_forward_values(targets_[k], x2, B, tv);
      for (std::size_t r = 0; r < B; ++r)
        y[r] = data.rewards[idx[r]] +
               cfg.gamma * (1.0 - data.dones[idx[r]]) * tv[r];
      Tape tape;
      Tape::Id xin = tape.leaf(B, xd, x);
      MlpGraph g = mlp_forward(tape, nets_[k], xin);
      Tape::Id yleaf = tape.leaf(B, 1, y);
      Tape::Id loss = tape.mean_all(tape.square(tape.sub(g.out, yleaf)));
      tape.backward(loss);
      const double lv = tape.val(loss)[0];
      check_finite(lv, "ensemble train loss");
      loss_acc += lv;
      std::span<const double> pred = tape.val(g.out);
      for (std::size_t r = 0; r < B; ++r) q_acc += pred[r];
      opts[k].step(nets_[k], tape, g);
    }
    for (std::size_t k = 0; k < nets_.size(); ++k)
      for (std::size_t l = 0; l < nets_[k].num_layers(); ++l) {
        for (std::size_t i = 0; i < nets_[k].W[l].size(); ++i)
          targets_[k].W[l][i] = (1.0 - cfg.polyak) * targets_[k].W[l][i] +
                                cfg.polyak * nets_[k].W[l][i];
        for (std::size_t i = 0; i < nets_[k].b[l].size(); ++i)
          targets_[k].b[l][i] = (1.0 - cfg.polyak) * targets_[k].b[l][i] +
                                cfg.polyak * nets_[k].b[l][i];
      }

    if (step == 1 || step % cfg.log_every == 0 || step == cfg.steps) {
      const double m = static_cast<double>(nets_.size());
      log.rows.push_back({step, loss_acc / m, 0.0,
                          q_acc / (m * static_cast<double>(B))});
    }
  }
  return log;
}

double EnsembleCritic::member_value(const Mlp& net,
                                    std::span<const double> state,
                                    std::span<const double> action) const {
  std::vector<double> x(state_dim_ + action_dim_);
  std::copy(state.begin(), state.end(), x.begin());
  std::copy(action.begin(), action.end(), x.begin() + state_dim_);
  std::vector<double> y;
  mlp_forward_values(net, x, 1, y);
  return y[0];
}

double EnsembleCritic::lcb(std::span<const double> state,
                           std::span<const double> action) const {
  const double m = static_cast<double>(nets_.size());
  double mean = 0.0;
  std::vector<double> vals(nets_.size());
  for (std::size_t k = 0; k < nets_.size(); ++k) {
    vals[k] = member_value(nets_[k], state, action);
    mean += vals[k];
  }
  mean /= m;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  return mean - std::sqrt(var / m);
}

CriticQuery EnsembleCritic::query(std::span<const double> state,
                                  std::span<const double> action) const {
  const std::size_t M = nets_.size();
  const double m = static_cast<double>(M);
  std::vector<double> vals(M);
  std::vector<std::vector<double>> grads(M);

  for (std::size_t k = 0; k < M; ++k) {
    Tape tape;
    Tape::Id s = tape.leaf(1, state_dim_, state);
    Tape::Id a = tape.leaf(1, action_dim_, action);
    MlpGraph g = mlp_forward(tape, nets_[k], tape.concat_cols(s, a));
    tape.backward(g.out);
    vals[k] = tape.val(g.out)[0];
    std::span<const double> ga = tape.grad(a);
    grads[k].assign(ga.begin(), ga.end());
  }

  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= m;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / m);

  CriticQuery out;
  out.value = mean - sd;
  out.action_gradient.assign(action_dim_, 0.0);
  if (sd < 1e-12) {
    // Degenerate spread: use the first member, consistent with the min-tie
    // convention at M=2.
    out.action_gradient = grads[0];
    return out;
  }
  for (std::size_t k = 0; k < M; ++k) {
    const double coeff = 1.0 / m - (vals[k] - mean) / (m * sd);
    for (std::size_t i = 0; i < action_dim_; ++i)
      out.action_gradient[i] += coeff * grads[k][i];
  }
  return out;
}

ValidationCurve kfold_validation_curve(const Dataset& data,
                                       const QueryableCritic& reference,
                                       const CriticConfig& critic_cfg,
                                       const SarsaConfig& train_cfg,
                                       double val_fraction,
                                       std::size_t n_checkpoints, Rng& rng) {
  data.validate();
  const std::size_t n = data.size();
  if (n < 2 || val_fraction <= 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("kfold_validation_curve: bad split");
  std::size_t n_val = static_cast<std::size_t>(
      val_fraction * static_cast<double>(n));
  if (n_val == 0) n_val = 1;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);

  auto subset = [&data](std::span<const std::size_t> rows) {
    Dataset d;
    d.state_dim = data.state_dim;
    d.action_dim = data.action_dim;
    for (std::size_t i : rows) {
      auto s = data.state(i);
      auto a = data.action(i);
      auto s2 = data.next_state(i);
      auto a2 = data.next_action(i);
      d.states.insert(d.states.end(), s.begin(), s.end());
      d.actions.insert(d.actions.end(), a.begin(), a.end());
      d.next_states.insert(d.next_states.end(), s2.begin(), s2.end());
      d.next_actions.insert(d.next_actions.end(), a2.begin(), a2.end());
      d.rewards.push_back(data.rewards[i]);
      d.dones.push_back(data.dones[i]);
    }
    d.metadata_json = data.metadata_json;
    return d;
  };
  Dataset val = subset({order.data(), n_val});
  Dataset train = subset({order.data() + n_val, n - n_val});

  // Reference values on the held-out rows are fixed up front.
  std::vector<double> ref_q(val.size());
  for (std::size_t i = 0; i < val.size(); ++i)
    ref_q[i] = reference.value(val.state(i), val.action(i));

  Rng init_rng = rng.fork(1);
  CriticPair fresh(data.state_dim, data.action_dim, critic_cfg, init_rng);
  ValidationCurve curve;
  std::size_t every = train_cfg.steps / n_checkpoints;
  if (every == 0) every = 1;

  std::vector<double> cur;
  auto record = [&](std::size_t step) {
    fresh.extract_q_batch(val.states, val.actions, val.size(), cur);
    double acc = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double d = ref_q[i] - cur[i];
      acc += d * d;
    }
    curve.steps.push_back(step);
    curve.val_loss.push_back(acc / static_cast<double>(val.size()));
  };

  Rng train_rng = rng.fork(2);
  fresh.sarsa_train(train, train_cfg, train_rng, record, every);
  return curve;
}

}  // namespace cfpi
