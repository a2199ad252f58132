// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line with the measured worst case next to the pinned tolerance; the
// process exits nonzero when any criterion fails.
//
// Usage: acceptance <path-to-cfpi-cli>
// The CLI path is only needed by the determinism criterion (11).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cfpi/algorithms.hpp"
#include "cfpi/autodiff.hpp"
#include "cfpi/behavior.hpp"
#include "cfpi/constants.hpp"
#include "cfpi/critic.hpp"
#include "cfpi/dataset.hpp"
#include "cfpi/env.hpp"
#include "cfpi/gaussian.hpp"
#include "cfpi/operators.hpp"
#include "cfpi/oracles.hpp"
#include "cfpi/rng.hpp"
#include "cfpi/stats.hpp"

namespace {

using namespace cfpi;
namespace fs = std::filesystem;

int g_failures = 0;

class Timer {
public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

void report(int idx, bool pass, const std::string& detail) {
  std::printf("%s criterion %2d: %s\n", pass ? "PASS" : "FAIL", idx,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return std::string(buf);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel_gap(double got, double want) {
  return std::fabs(got - want) / std::max(1.0, std::fabs(want));
}

struct RandomInstance {
  GaussianMixture mix;
  std::vector<double> g;
  double log_tau = 0.0;
};

// d in 1..10, N in 1..8, variances in [0.1, 10], means in [-2, 2],
// log tau cycling {0.1, 0.5, 1.5}.
RandomInstance random_instance(Rng r, std::size_t index) {
  RandomInstance inst;
  const std::size_t d = 1 + static_cast<std::size_t>(r.uniform_int(10));
  const std::size_t n = 1 + static_cast<std::size_t>(r.uniform_int(8));
  std::vector<double> w(n);
  double wsum = 0.0;
  for (auto& v : w) {
    v = r.uniform(0.2, 1.0);
    wsum += v;
  }
  for (auto& v : w) v /= wsum;
  std::vector<DiagGaussian> comps;
  comps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> mean(d), var(d);
    for (std::size_t k = 0; k < d; ++k) {
      mean[k] = r.uniform(-2.0, 2.0);
      var[k] = r.uniform(0.1, 10.0);
    }
    comps.emplace_back(std::move(mean), std::move(var));
  }
  inst.mix = GaussianMixture(std::move(w), std::move(comps));
  inst.g.resize(d);
  double gn = 0.0;
  for (auto& v : inst.g) {
    v = r.uniform(-1.0, 1.0);
    gn += v * v;
  }
  if (std::sqrt(gn) < 1e-3) inst.g[0] = 1.0;
  const double taus[3] = {0.1, 0.5, 1.5};
  inst.log_tau = taus[index % 3];
  return inst;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::string("\x01<missing:") + p.string() + ">";
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Criteria 1 + 2: closed form vs dual-bisection oracles, and the KKT
// activeness of the single-Gaussian step.

void criteria_1_2() {
  Timer t;
  const Rng root(20260101);
  double worst_gap = 0.0;
  double worst_kkt = 0.0;
  std::size_t kkt_checked = 0;
  std::string first_fail;

  for (std::size_t i = 0; i < 1000 && first_fail.empty(); ++i) {
    const RandomInstance inst = random_instance(root.fork(i), i);
    const std::vector<double>& g = inst.g;
    const double lt = inst.log_tau;

    // Single Gaussian: first component.
    const DiagGaussian& g0 = inst.mix.components.front();
    const std::vector<double> a_sg = improve_sg(g0, {g, g0.mean}, lt);
    const std::vector<double> a_ref = oracle::qclp_sg_bisect(g0, g, lt);
    double gap = rel_gap(dot(g, a_sg), dot(g, a_ref));
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-6) first_fail = fmt("sg gap %.3e at instance %zu", gap, i);

    if (sigma_norm(g0.var, g) > kGradEps) {
      const TrustRegion tr = sg_trust_region(g0, lt);
      const double kkt = std::fabs(-log_prob(g0, a_sg) - tr.delta);
      worst_kkt = std::max(worst_kkt, kkt);
      ++kkt_checked;
    }

    // Max-term bound: per-component anchors, constant gradient field, and
    // a linear evaluator so the operator scores exactly g . a.
    std::vector<ActionGradient> grads;
    grads.reserve(inst.mix.size());
    for (const DiagGaussian& c : inst.mix.components)
      grads.push_back({g, c.mean});
    const ActionValueFn lin = [&g](std::span<const double> a) {
      return dot(g, a);
    };
    const CandidateAction a_lse = improve_lse(inst.mix, grads, lt, lin);
    const oracle::LseOracleResult lse_ref =
        oracle::qclp_lse_bisect(inst.mix, g, lt);
    gap = rel_gap(dot(g, a_lse.action), lse_ref.objective);
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-6 && first_fail.empty())
      first_fail = fmt("lse gap %.3e at instance %zu", gap, i);

    // Expectation bound: gradient anchored at the merged mean.
    const PseudoGaussian pg = pseudo_gaussian(inst.mix);
    const std::vector<double> a_j = improve_jensen(inst.mix, {g, pg.mean}, lt);
    const std::vector<double> j_ref =
        oracle::qclp_jensen_bisect(inst.mix, g, lt);
    gap = rel_gap(dot(g, a_j), dot(g, j_ref));
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-6 && first_fail.empty())
      first_fail = fmt("jensen gap %.3e at instance %zu", gap, i);
  }

  const double secs = t.seconds();
  bool pass1 = first_fail.empty() && secs < 60.0;
  report(1, pass1,
         first_fail.empty()
             ? fmt("closed form vs oracle: worst rel gap %.3e (tol 1e-6), "
                   "3000 subproblems over 1000 instances, %.1fs (limit 60s)",
                   worst_gap, secs)
             : first_fail);

  const bool pass2 = worst_kkt <= 1e-8 && kkt_checked > 900;
  report(2, pass2,
         fmt("sg constraint active at the step: worst |(-log pi(mu_sg)) - "
             "delta| = %.3e (tol 1e-8, %zu feasible instances)",
             worst_kkt, kkt_checked));
}

// ---------------------------------------------------------------------------
// Criterion 3: both bounds sit below the exact mixture log density, with
// equality for single-component mixtures.

void criterion_3() {
  const Rng root(33003);
  double worst_violation = -1e300;  // max of (bound - logprob); must be <= 0
  double worst_collapse = 0.0;
  for (std::size_t i = 0; i < 10000; ++i) {
    Rng r = root.fork(i);
    const RandomInstance inst = random_instance(r, i);
    const std::size_t d = inst.mix.dim();
    std::vector<double> x(d);
    // Half the points near a random mode, half spread wide.
    if (i % 2 == 0) {
      const std::size_t j =
          static_cast<std::size_t>(r.uniform_int(inst.mix.size()));
      for (std::size_t k = 0; k < d; ++k)
        x[k] = inst.mix.components[j].mean[k] + r.normal(0.0, 2.0);
    } else {
      for (std::size_t k = 0; k < d; ++k) x[k] = r.uniform(-8.0, 8.0);
    }
    const double lp = log_prob(inst.mix, x);
    const double lse = lse_lower_bound(inst.mix, x);
    const double jen = jensen_lower_bound(inst.mix, x);
    worst_violation = std::max(worst_violation, lse - lp);
    worst_violation = std::max(worst_violation, jen - lp);
  }
  // Single-component collapse: both bounds equal the exact density.
  for (std::size_t i = 0; i < 1000; ++i) {
    Rng r = root.fork(100000 + i);
    RandomInstance inst = random_instance(r, i);
    GaussianMixture single({1.0}, {inst.mix.components.front()});
    std::vector<double> x(single.dim());
    for (auto& v : x) v = r.uniform(-6.0, 6.0);
    const double lp = log_prob(single, x);
    worst_collapse =
        std::max(worst_collapse, std::fabs(lse_lower_bound(single, x) - lp));
    worst_collapse = std::max(worst_collapse,
                              std::fabs(jensen_lower_bound(single, x) - lp));
  }
  const bool pass = worst_violation <= 1e-12 && worst_collapse <= 1e-10;
  report(3, pass,
         fmt("bound dominance on 10000 pairs: max(bound - logprob) = %.3e "
             "(tol 1e-12); N=1 collapse gap %.3e (tol 1e-10)",
             worst_violation, worst_collapse));
}

// ---------------------------------------------------------------------------
// Criterion 4: all three updates coincide on single-component mixtures.

void criterion_4() {
  const Rng root(44004);
  double worst = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    RandomInstance inst = random_instance(root.fork(i), i);
    const DiagGaussian& comp = inst.mix.components.front();
    const GaussianMixture single({1.0}, {comp});
    const std::vector<double>& g = inst.g;
    const double lt = inst.log_tau;

    const std::vector<double> a_sg = improve_sg(comp, {g, comp.mean}, lt);
    const std::vector<ActionGradient> grads = {{g, comp.mean}};
    const ActionValueFn lin = [&g](std::span<const double> a) {
      return dot(g, a);
    };
    const CandidateAction a_lse = improve_lse(single, grads, lt, lin);
    const PseudoGaussian pg = pseudo_gaussian(single);
    const std::vector<double> a_j = improve_jensen(single, {g, pg.mean}, lt);

    for (std::size_t k = 0; k < a_sg.size(); ++k) {
      worst = std::max(worst, std::fabs(a_lse.action[k] - a_sg[k]));
      worst = std::max(worst, std::fabs(a_j[k] - a_sg[k]));
    }
  }
  report(4, worst <= 1e-10,
         fmt("N=1 reduction: max elementwise spread across sg/lse/jensen = "
             "%.3e (tol 1e-10, 500 instances)",
             worst));
}

// ---------------------------------------------------------------------------
// Criterion 5: autodiff gradients vs central finite differences on random
// networks, for every parameter and every input entry.

void criterion_5() {
  const Rng root(55005);
  double worst = 0.0;
  std::string fail;
  for (std::size_t trial = 0; trial < 100 && fail.empty(); ++trial) {
    Rng r = root.fork(trial);
    const std::size_t in = 1 + static_cast<std::size_t>(r.uniform_int(4));
    const std::size_t out = 1 + static_cast<std::size_t>(r.uniform_int(3));
    const std::size_t depth = static_cast<std::size_t>(r.uniform_int(3));
    std::vector<std::size_t> hidden;
    for (std::size_t l = 0; l < depth; ++l)
      hidden.push_back(2 + static_cast<std::size_t>(r.uniform_int(5)));
    const std::size_t batch = 1 + static_cast<std::size_t>(r.uniform_int(3));

    Mlp net = Mlp::init(in, out, hidden, r);
    std::vector<double> x(batch * in), w(batch * out);
    for (auto& v : w) v = r.uniform(-1.0, 1.0);

    // Central differences are only trustworthy away from the ReLU kinks:
    // a pre-activation within ~h of zero flips sign inside the probe and
    // poisons the quotient. Resample the input until every hidden
    // pre-activation clears a margin much larger than any parameter or
    // input perturbation can move it.
    const auto min_preact = [&](const std::vector<double>& xin) {
      const std::vector<std::size_t> sizes = net.layer_sizes();
      std::vector<double> h = xin;
      double m = 1e300;
      for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
        const std::size_t ni = sizes[l], no = sizes[l + 1];
        std::vector<double> z(batch * no);
        for (std::size_t bi = 0; bi < batch; ++bi)
          for (std::size_t o = 0; o < no; ++o) {
            double s = net.b[l][o];
            for (std::size_t k = 0; k < ni; ++k)
              s += net.W[l][o * ni + k] * h[bi * ni + k];
            z[bi * no + o] = s;
            m = std::min(m, std::fabs(s));
          }
        for (auto& v : z) v = std::max(v, 0.0);
        h = std::move(z);
      }
      return m;
    };
    for (int attempt = 0; attempt < 500; ++attempt) {
      for (auto& v : x) v = r.uniform(-1.5, 1.5);
      if (net.num_layers() == 1 || min_preact(x) > 1e-3) break;
    }

    // loss(theta, x) = sum(w . f_theta(x)); a dense scalarization so every
    // output feeds the gradient.
    const auto loss_value = [&](const Mlp& m, const std::vector<double>& xin) {
      std::vector<double> y;
      mlp_forward_values(m, xin, batch, y);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
      return s;
    };

    Tape tape;
    const Tape::Id xid = tape.leaf(batch, in, x);
    const MlpGraph graph = mlp_forward(tape, net, xid);
    const Tape::Id wid = tape.leaf(batch, out, w);
    const Tape::Id loss = tape.sum_all(tape.mul(graph.out, wid));
    tape.backward(loss);

    const double h = 1e-5;
    const auto check = [&](double ad, double* slot, const char* what) {
      const double saved = *slot;
      *slot = saved + h;
      const double up = loss_value(net, x);
      *slot = saved - h;
      const double dn = loss_value(net, x);
      *slot = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::fabs(ad - fd) / std::max(1.0, std::fabs(fd));
      worst = std::max(worst, err);
      if (err > 1e-4 && fail.empty())
        fail = fmt("%s grad rel err %.3e at net %zu", what, err, trial);
    };

    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const std::span<const double> gw = tape.grad(graph.w_ids[l]);
      for (std::size_t k = 0; k < net.W[l].size(); ++k)
        check(gw[k], &net.W[l][k], "weight");
      const std::span<const double> gb = tape.grad(graph.b_ids[l]);
      for (std::size_t k = 0; k < net.b[l].size(); ++k)
        check(gb[k], &net.b[l][k], "bias");
    }
    const std::span<const double> gx = tape.grad(xid);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double ad = gx[k];
      const double saved = x[k];
      x[k] = saved + h;
      const double up = loss_value(net, x);
      x[k] = saved - h;
      const double dn = loss_value(net, x);
      x[k] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::fabs(ad - fd) / std::max(1.0, std::fabs(fd));
      worst = std::max(worst, err);
      if (err > 1e-4 && fail.empty())
        fail = fmt("input grad rel err %.3e at net %zu", err, trial);
    }
  }
  report(5, fail.empty(),
         fail.empty()
             ? fmt("autodiff vs central differences: worst rel err %.3e "
                   "(tol 1e-4) over 100 random networks",
                   worst)
             : fail);
}

// ---------------------------------------------------------------------------
// Criterion 6: the trained quantile critic reproduces the tabular SARSA
// fixed point of the chain.

void criterion_6() {
  Timer t;
  const ChainMdp chain;  // 5 states, gamma 0.9, horizon 40
  const Env& env = get_env("chain-v0");
  // A 50/50 left/right mixture exercises the critic on both bins equally;
  // the tabular fixed point below is computed for the same policy.
  const GaussianMixture balanced({0.5, 0.5}, {DiagGaussian({-0.5}, {0.04}),
                                              DiagGaussian({0.5}, {0.04})});
  const FixedMixturePolicy beh(balanced);
  std::vector<const Policy*> ptrs = {&beh};
  const std::vector<double> fractions = {1.0};
  const std::vector<std::string> labels = {"left-right-mix"};
  const Dataset data =
      generate_heterogeneous(env, ptrs, fractions, labels, 100, Rng(66006));

  Rng init = Rng(66007);
  CriticPair critic(1, 1, CriticConfig{8, {64, 64}}, init);
  SarsaConfig cfg;
  cfg.steps = 6000;
  cfg.batch = 128;
  cfg.lr = 1e-3;
  cfg.gamma = chain.spec().gamma;
  cfg.polyak = 5e-3;
  cfg.log_every = 2000;
  Rng train = Rng(66008);
  critic.sarsa_train(data, cfg, train);
  const double train_secs = t.seconds();

  const std::vector<double> p_right(chain.num_states(),
                                    prob_nonnegative_1d(balanced));
  const std::vector<double> q_ref = chain_dp_q(chain, p_right);

  double worst = 0.0;
  for (std::size_t k = 0; k < chain.num_states(); ++k) {
    const std::vector<double> s = {chain.embed(k)};
    for (std::size_t bin = 0; bin < 2; ++bin) {
      const std::vector<double> a = {bin == 0 ? -0.5 : 0.5};
      const double got = critic.extract_q(s, a);
      worst = std::max(worst, std::fabs(got - q_ref[k * 2 + bin]));
    }
  }
  const bool pass = worst <= 0.02 && train_secs < 120.0;
  report(6, pass,
         fmt("chain critic vs tabular fixed point: worst |Q_hat - Q| = %.4f "
             "(tol 0.02) over all state/bin pairs, training %.1fs (limit "
             "120s)",
             worst, train_secs));
}

// ---------------------------------------------------------------------------
// Criterion 7: mode selection and the mixture one-step beat the pooled
// behavior-cloning baselines on genuinely bimodal data.

void criterion_7() {
  Timer t;
  const Env& env = get_env("pointmass-bimodal-v0");
  const EnvSpec& spec = env.spec();
  const ActionBounds bounds{spec.action_low, spec.action_high};

  const std::size_t seeds = 10;
  double sum_mode = 0.0, sum_mg = 0.0, sum_sgbc = 0.0, sum_sg = 0.0;
  for (std::size_t seed = 0; seed < seeds; ++seed) {
    BehaviorMix mix = make_behavior_mix(env);
    std::vector<const Policy*> ptrs;
    for (const auto& p : mix.policies) ptrs.push_back(p.get());
    const Dataset data = generate_heterogeneous(
        env, ptrs, mix.fractions, mix.labels, 200, Rng(77000 + seed));

    const Rng root(77100 + seed);
    Rng b4i = root.fork(0), b4t = root.fork(1);
    Rng b1i = root.fork(2), b1t = root.fork(3);
    Rng ci = root.fork(4), ct = root.fork(5);

    auto head2 = std::make_shared<BehaviorHead>(
        spec.state_dim, spec.action_dim, 2,
        std::vector<std::size_t>{64, 64}, b4i);
    BcConfig bc;
    bc.steps = 4000;
    bc.batch = 256;
    bc.lr = 1e-3;
    bc.log_every = 4000;
    head2->train(data, bc, b4t);

    auto head1 = std::make_shared<BehaviorHead>(
        spec.state_dim, spec.action_dim, 1,
        std::vector<std::size_t>{64, 64}, b1i);
    BcConfig bc1 = bc;
    bc1.steps = 1000;
    head1->train(data, bc1, b1t);

    auto critic = std::make_shared<CriticPair>(
        spec.state_dim, spec.action_dim, CriticConfig{8, {64, 64}}, ci);
    SarsaConfig sc;
    sc.steps = 6000;
    sc.batch = 128;
    sc.lr = 1e-3;
    sc.gamma = spec.gamma;
    sc.polyak = 1e-2;
    sc.log_every = 6000;
    critic->sarsa_train(data, sc, ct);

    OperatorParams mode_p;
    mode_p.kind = OperatorKind::kModeSelect;
    OperatorParams mg_p;
    mg_p.kind = OperatorKind::kMg;
    mg_p.log_tau = 0.5;
    OperatorParams sg_p;
    sg_p.kind = OperatorKind::kSg;
    sg_p.log_tau = 0.5;

    const ImprovedPolicy mode_pol(head2, critic, mode_p, bounds);
    const ImprovedPolicy mg_pol(head2, critic, mg_p, bounds);
    const ModelMeanPolicy sgbc_pol(head1, bounds);
    const ImprovedPolicy sg_pol(head1, critic, sg_p, bounds);

    const Rng eval(77200 + seed);
    const std::size_t eps = 40;
    sum_mode += normalized_score(rollout(env, mode_pol, eps, eval).mean_return,
                                 spec);
    sum_mg +=
        normalized_score(rollout(env, mg_pol, eps, eval).mean_return, spec);
    sum_sgbc +=
        normalized_score(rollout(env, sgbc_pol, eps, eval).mean_return, spec);
    sum_sg +=
        normalized_score(rollout(env, sg_pol, eps, eval).mean_return, spec);
  }
  const double mode = sum_mode / seeds, mg = sum_mg / seeds,
               sgbc = sum_sgbc / seeds, sg = sum_sg / seeds;
  const bool pass =
      mode >= 90.0 && mg >= 90.0 && sgbc <= 70.0 && (mg - sg) >= 5.0;
  report(7, pass,
         fmt("bimodal point mass (10 seeds, normalized): mode-select %.1f "
             "(>=90), mg %.1f (>=90), sg-bc mean %.1f (<=70), mg - sg = %.1f "
             "(>=5, sg %.1f), %.0fs",
             mode, mg, sgbc, mg - sg, sg, t.seconds()));
}

// ---------------------------------------------------------------------------
// Criterion 8: one-step safety. Exact on the bandit with the analytic
// critic; within Monte-Carlo margin on the chain.

void criterion_8() {
  Timer t;
  // Part 1: analytic bandit, every operator, both trust-region sizes.
  const QuadraticBandit bandit;
  const GaussianMixture bmix = bandit.behavior_model();
  auto model = std::make_shared<FixedConditionalModel>(bmix);
  std::shared_ptr<const QueryableCritic> crit(bandit.analytic_critic());
  const ActionBounds bounds{bandit.spec().action_low,
                            bandit.spec().action_high};
  const double j_beta = bandit.analytic_policy_value(bmix);
  const std::vector<double> s0 = {0.0};

  const OperatorKind kinds[] = {
      OperatorKind::kSg,         OperatorKind::kLse,
      OperatorKind::kJensen,     OperatorKind::kMg,
      OperatorKind::kModeSelect, OperatorKind::kEasyBcq,
      OperatorKind::kDet};
  std::string fail;
  double worst_edge = 1e300;
  for (OperatorKind kind : kinds) {
    for (double lt : {0.1, 0.5}) {
      OperatorParams p;
      p.kind = kind;
      p.log_tau = lt;
      p.det_delta = lt;  // give det the same budget scale
      p.m_samples = 5;
      p.sample_seed = 4242;
      const ImprovedPolicy pol(model, crit, p, bounds);
      const CandidateAction ca = pol.act_detailed(s0);
      const double j1 = bandit.analytic_action_value(ca.action);
      worst_edge = std::min(worst_edge, j1 - j_beta);
      if (!(j1 >= j_beta) && fail.empty())
        fail = fmt("bandit: operator %d at log tau %.1f gives J=%.6f < "
                   "J_beta=%.6f",
                   static_cast<int>(kind), lt, j1, j_beta);
    }
  }

  // Part 2: chain with learned behavior + critic, Monte-Carlo margin 0.05.
  const Env& env = get_env("chain-v0");
  const EnvSpec& cs = env.spec();
  const ActionBounds cb{cs.action_low, cs.action_high};
  double worst_margin = 1e300;
  for (std::size_t seed = 0; seed < 5 && fail.empty(); ++seed) {
    BehaviorMix mix = make_behavior_mix(env);
    std::vector<const Policy*> ptrs;
    for (const auto& p : mix.policies) ptrs.push_back(p.get());
    const Dataset data = generate_heterogeneous(
        env, ptrs, mix.fractions, mix.labels, 60, Rng(88000 + seed));

    const Rng root(88100 + seed);
    Rng bi = root.fork(0), bt = root.fork(1), ci = root.fork(2),
        ct = root.fork(3);
    auto head = std::make_shared<BehaviorHead>(
        cs.state_dim, cs.action_dim, 2, std::vector<std::size_t>{32}, bi);
    BcConfig bc;
    bc.steps = 1200;
    bc.batch = 128;
    bc.lr = 2e-3;
    bc.log_every = 1200;
    head->train(data, bc, bt);
    auto critic = std::make_shared<CriticPair>(
        cs.state_dim, cs.action_dim, CriticConfig{8, {32, 32}}, ci);
    SarsaConfig sc;
    sc.steps = 2500;
    sc.batch = 64;
    sc.lr = 1.5e-3;
    sc.gamma = cs.gamma;
    sc.polyak = 1e-2;
    sc.log_every = 2500;
    critic->sarsa_train(data, sc, ct);

    const Rng eval(88200 + seed);
    const std::size_t eps = 200;
    const ModelSamplePolicy beh(head, cb);
    const double jb = rollout(env, beh, eps, eval).mean_return;
    for (OperatorKind kind : kinds) {
      for (double lt : {0.1, 0.5}) {
        OperatorParams p;
        p.kind = kind;
        p.log_tau = lt;
        p.det_delta = lt;
        p.m_samples = 5;
        p.sample_seed = 4242;
        const ImprovedPolicy pol(head, critic, p, cb);
        const double j1 = rollout(env, pol, eps, eval).mean_return;
        worst_margin = std::min(worst_margin, j1 - jb);
        if (j1 < jb - 0.05 && fail.empty())
          fail = fmt("chain seed %zu: operator %d at log tau %.1f gives "
                     "J=%.3f < J_beta=%.3f - 0.05",
                     seed, static_cast<int>(kind), lt, j1, jb);
      }
    }
  }
  report(8, fail.empty(),
         fail.empty()
             ? fmt("safety: bandit exact min(J1 - J_beta) = %.4f >= 0 (7 ops "
                   "x 2 trust regions); chain min(J1 - J_beta) = %.3f >= "
                   "-0.05 (5 seeds), %.0fs",
                   worst_edge, worst_margin, t.seconds())
             : fail);
}

// ---------------------------------------------------------------------------
// Criterion 9: the iterative variant keeps (or improves) the one-step
// result and stays above behavior.

void criterion_9() {
  Timer t;
  const Env& env = get_env("chain-v0");
  const EnvSpec& cs = env.spec();
  std::string fail;
  double worst_vs_one = 1e300, worst_vs_beh = 1e300;
  for (std::size_t seed = 0; seed < 5 && fail.empty(); ++seed) {
    BehaviorMix mix = make_behavior_mix(env);
    std::vector<const Policy*> ptrs;
    for (const auto& p : mix.policies) ptrs.push_back(p.get());
    const Dataset data = generate_heterogeneous(
        env, ptrs, mix.fractions, mix.labels, 80, Rng(99000 + seed));

    PipelineConfig cfg;
    cfg.bc_components = 2;
    cfg.bc_hidden = {32};
    cfg.bc_steps = 1200;
    cfg.bc_batch = 128;
    cfg.bc_lr = 2e-3;
    cfg.n_quantiles = 8;
    cfg.q_hidden = {32, 32};
    cfg.sarsa_steps = 2500;
    cfg.sarsa_batch = 64;
    cfg.sarsa_lr = 1.5e-3;
    cfg.gamma = cs.gamma;
    cfg.polyak = 1e-2;
    cfg.log_every = 2500;
    cfg.op.kind = OperatorKind::kMg;
    cfg.op.log_tau = 0.5;
    cfg.bounds = {cs.action_low, cs.action_high};

    IterativeConfig it;
    it.steps = 1200;
    it.batch = 32;
    it.lr = 5e-4;
    it.noise_sd = 0.1;
    it.noise_clip = 0.3;
    it.polyak = 5e-3;
    it.log_every = 1200;

    const Pipeline one = one_step(data, cfg, 99100 + seed);
    const Pipeline multi = iterate(data, cfg, it, 99100 + seed);

    const Rng eval(99200 + seed);
    const std::size_t eps = 400;
    const double j_one =
        rollout(env, *one.policy, eps, eval).mean_return;
    const double j_iter =
        rollout(env, *multi.policy, eps, eval).mean_return;
    const ModelSamplePolicy beh(multi.behavior, cfg.bounds);
    const double j_beh = rollout(env, beh, eps, eval).mean_return;

    worst_vs_one = std::min(worst_vs_one, j_iter - j_one);
    worst_vs_beh = std::min(worst_vs_beh, j_iter - j_beh);
    if (j_iter < j_one - 0.02)
      fail = fmt("seed %zu: iterative %.3f < one-step %.3f - 0.02", seed,
                 j_iter, j_one);
    if (j_iter < j_beh && fail.empty())
      fail = fmt("seed %zu: iterative %.3f < behavior %.3f", seed, j_iter,
                 j_beh);
  }
  const double secs = t.seconds();
  const bool pass = fail.empty() && secs < 300.0;
  report(9, pass,
         fail.empty()
             ? fmt("iterative vs one-step on the chain (5 seeds): min(J_iter "
                   "- J_one) = %.3f (>= -0.02), min(J_iter - J_beta) = %.3f "
                   "(>= 0), %.0fs (limit 300s)",
                   worst_vs_one, worst_vs_beh, secs)
             : fail);
}

// ---------------------------------------------------------------------------
// Criterion 10: aggregate statistics: exact IQM value, profile shape, and
// bootstrap coverage near nominal.

void criterion_10() {
  // Exact IQM.
  const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8};
  const double iqm_err = std::fabs(iqm(v) - 4.5);

  // Profile: nonincreasing with exact endpoints.
  RunMatrix pm;
  pm.n_tasks = 1;
  pm.n_seeds = 4;
  pm.scores = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> thr = {0.5, 1.0, 2.5, 4.0, 4.5};
  const std::vector<double> prof = performance_profile(pm, thr);
  bool prof_ok = prof.size() == thr.size();
  for (std::size_t i = 1; prof_ok && i < prof.size(); ++i)
    prof_ok = prof[i] <= prof[i - 1] + 1e-15;
  prof_ok = prof_ok && prof.front() == 1.0 && prof.back() == 0.0 &&
            prof[1] == 1.0 && prof[2] == 0.5 && prof[3] == 0.25;

  // Coverage: simulated 3-task x 16-seed matrices from Gaussians centered at
  // {40, 50, 60}; the pooled interquartile mean of the population is 50 by
  // symmetry. 200 replications of a 95% stratified bootstrap interval.
  const Rng root(101010);
  const double mus[3] = {40.0, 50.0, 60.0};
  std::size_t covered = 0;
  const std::size_t reps = 200;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    Rng r = root.fork(rep);
    RunMatrix m;
    m.n_tasks = 3;
    m.n_seeds = 16;
    m.scores.resize(48);
    for (std::size_t task = 0; task < 3; ++task)
      for (std::size_t seed = 0; seed < 16; ++seed)
        m.score(task, seed) = r.normal(mus[task], 10.0);
    const ConfInterval ci = stratified_bootstrap_ci(
        m, [](const RunMatrix& mm) { return iqm_of(mm); }, 800, 0.95,
        r.fork(1));
    if (ci.lo <= 50.0 && 50.0 <= ci.hi) ++covered;
  }
  const double coverage = static_cast<double>(covered) / reps;

  const bool pass =
      iqm_err <= 1e-12 && prof_ok && std::fabs(coverage - 0.95) <= 0.07;
  report(10, pass,
         fmt("aggregates: |IQM(1..8) - 4.5| = %.1e (tol 1e-12); profile "
             "nonincreasing with exact endpoints: %s; bootstrap coverage "
             "%.3f (nominal 0.95 +/- 0.07, 200 reps)",
             iqm_err, prof_ok ? "yes" : "NO", coverage));
}

// ---------------------------------------------------------------------------
// Criterion 11: CLI determinism: identical seed and config give byte-equal
// artifacts.

int run_cmd(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc;
}

void criterion_11(const std::string& cli) {
  if (cli.empty()) {
    report(11, false, "no CLI path supplied (usage: acceptance <cfpi-path>)");
    return;
  }
  const fs::path dir = fs::path("accept_cli_tmp");
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  const std::string d = dir.string();
  const std::string q = "\"" + cli + "\"";
  const std::string sink = " >> " + d + "/cli_log.txt 2>&1";

  std::ofstream cfg(dir / "config.json");
  cfg << "{\"bc_components\":2,\"bc_hidden\":[16],\"bc_steps\":250,"
         "\"bc_batch\":64,\"bc_lr\":0.003,\"n_quantiles\":4,"
         "\"q_hidden\":[16],\"sarsa_steps\":350,\"sarsa_batch\":32,"
         "\"sarsa_lr\":0.002,\"log_every\":100,\"operator\":\"mg\","
         "\"log_tau\":0.5}\n";
  cfg.close();

  std::string fail;
  const auto run = [&](const std::string& args) {
    if (!fail.empty()) return;
    if (run_cmd(q + " " + args + sink) != 0)
      fail = "command failed: " + args;
  };

  run("gen-data --env chain-v0 --episodes 10 --seed 5 --out " + d +
      "/data1.bin");
  run("gen-data --env chain-v0 --episodes 10 --seed 5 --out " + d +
      "/data2.bin");
  run("improve --data " + d + "/data1.bin --config " + d +
      "/config.json --seed 3 --episodes 0 --out " + d + "/run1");
  run("improve --data " + d + "/data1.bin --config " + d +
      "/config.json --seed 3 --episodes 0 --out " + d + "/run2");
  run("eval --run " + d + "/run1 --episodes 40 --seed 9 --out " + d + "/ev1");
  run("eval --run " + d + "/run1 --episodes 40 --seed 9 --out " + d + "/ev2");

  bool equal = true;
  std::string what = "byte-identical";
  if (fail.empty()) {
    const std::pair<std::string, std::string> pairs[] = {
        {d + "/data1.bin", d + "/data2.bin"},
        {d + "/run1/result.json", d + "/run2/result.json"},
        {d + "/run1/log.csv", d + "/run2/log.csv"},
        {d + "/ev1/result.json", d + "/ev2/result.json"},
        {d + "/ev1/log.csv", d + "/ev2/log.csv"},
    };
    for (const auto& pr : pairs) {
      if (read_bytes(pr.first) != read_bytes(pr.second)) {
        equal = false;
        what = "mismatch: " + pr.first + " vs " + pr.second;
        break;
      }
    }
  }
  const bool pass = fail.empty() && equal;
  report(11, pass,
         pass ? "repeated gen-data / improve / eval runs with equal seeds: "
                "result.json, log.csv and dataset files byte-identical"
              : (fail.empty() ? what : fail));
}

// ---------------------------------------------------------------------------
// Criterion 12: on a deliberately tiny train split the held-out validation
// curve bottoms out before the final checkpoint.

void criterion_12() {
  Timer t;
  const Env& env = get_env("chain-v0");
  BehaviorMix mix = make_behavior_mix(env);
  std::vector<const Policy*> ptrs;
  for (const auto& p : mix.policies) ptrs.push_back(p.get());
  const Dataset full = generate_heterogeneous(
      env, ptrs, mix.fractions, mix.labels, 100, Rng(121212));

  // Trusted reference critic from the full dataset.
  Rng ri = Rng(121213);
  CriticPair reference(1, 1, CriticConfig{8, {64, 64}}, ri);
  SarsaConfig rc;
  rc.steps = 6000;
  rc.batch = 128;
  rc.lr = 1e-3;
  rc.gamma = env.spec().gamma;
  rc.polyak = 5e-3;
  rc.log_every = 6000;
  Rng rt = Rng(121214);
  reference.sarsa_train(full, rc, rt);

  // Tiny split: the first 160 transitions only.
  const std::size_t n = 160;
  Dataset tiny;
  tiny.state_dim = full.state_dim;
  tiny.action_dim = full.action_dim;
  tiny.metadata_json = full.metadata_json;
  tiny.states.assign(full.states.begin(),
                     full.states.begin() + n * full.state_dim);
  tiny.actions.assign(full.actions.begin(),
                      full.actions.begin() + n * full.action_dim);
  tiny.rewards.assign(full.rewards.begin(), full.rewards.begin() + n);
  tiny.next_states.assign(full.next_states.begin(),
                          full.next_states.begin() + n * full.state_dim);
  tiny.next_actions.assign(full.next_actions.begin(),
                           full.next_actions.begin() + n * full.action_dim);
  tiny.dones.assign(full.dones.begin(), full.dones.begin() + n);
  tiny.validate();

  SarsaConfig vc;
  vc.steps = 4000;
  vc.batch = 64;
  vc.lr = 2e-3;
  vc.gamma = env.spec().gamma;
  vc.polyak = 5e-3;
  vc.log_every = 1000000;

  std::size_t early = 0;
  std::string shape;
  for (std::size_t seed = 0; seed < 5; ++seed) {
    Rng r = Rng(121300 + seed);
    const ValidationCurve curve = kfold_validation_curve(
        tiny, reference, CriticConfig{8, {64, 64}}, vc, 0.25, 10, r);
    const auto it =
        std::min_element(curve.val_loss.begin(), curve.val_loss.end());
    const std::size_t idx =
        static_cast<std::size_t>(it - curve.val_loss.begin());
    if (idx + 1 < curve.val_loss.size()) ++early;
    shape += fmt("%zu/%zu ", idx + 1, curve.val_loss.size());
  }
  const bool pass = early >= 4;
  report(12, pass,
         fmt("early stopping on a 160-row train split: min checkpoint "
             "(position/total) per seed = %sso %zu/5 seeds bottom out early "
             "(need >= 4), %.0fs",
             shape.c_str(), early, t.seconds()));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::printf("acceptance gate: 12 criteria\n");
  Timer total;

  criteria_1_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11(cli);
  criterion_12();

  std::printf("%d of 12 criteria failed, %.0fs total\n", g_failures,
              total.seconds());
  return g_failures == 0 ? 0 : 1;
}
