// cfpi: dataset generation, behavior cloning, critic training, closed-form
// policy improvement, evaluation rollouts, and aggregate reporting.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
// failure (including oracle-check violations).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfpi/algorithms.hpp"
#include "cfpi/behavior.hpp"
#include "cfpi/critic.hpp"
#include "cfpi/dataset.hpp"
#include "cfpi/env.hpp"
#include "cfpi/errors.hpp"
#include "cfpi/jsonio.hpp"
#include "cfpi/oracles.hpp"
#include "cfpi/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cfpi;

namespace {

// ---------------------------------------------------------------------------
// Small file/config helpers

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open config: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DatasetError("config is not valid JSON: " + path);
  if (!j.is_object()) throw DatasetError("config root must be an object: " + path);
  return j;
}

template <typename T>
T jget(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DatasetError(std::string("config key has wrong type: ") + key);
  }
}

std::vector<std::size_t> jget_sizes(const json& j, const char* key,
                                    std::vector<std::size_t> fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_array())
    throw DatasetError(std::string("config key must be an array: ") + key);
  std::vector<std::size_t> out;
  for (const auto& v : *it) out.push_back(v.get<std::size_t>());
  return out;
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + p.string());
  out << s;
}

fs::path run_dir_init(const std::string& out) {
  if (out.empty()) throw DatasetError("--out is required");
  fs::path dir(out);
  fs::create_directories(dir / "checkpoints");
  return dir;
}

// ---------------------------------------------------------------------------
// Stable CSV/JSON emission (all floats via fmt_double)

std::string csv_num(double v) { return jsonio::fmt_double(v); }

std::string bc_log_csv(const BcLog& log) {
  std::string s = "step,loss\n";
  for (const auto& r : log.rows)
    s += std::to_string(r.step) + "," + csv_num(r.loss) + "\n";
  return s;
}

void train_rows_csv(std::string& s, const char* phase, const TrainLog& log) {
  for (const auto& r : log.rows)
    s += std::string(phase) + "," + std::to_string(r.step) + "," +
         csv_num(r.loss1) + "," + csv_num(r.loss2) + "," + csv_num(r.q_mean) +
         "\n";
}

std::string pipeline_log_csv(const Pipeline& p) {
  std::string s = "phase,step,loss1,loss2,q_mean\n";
  for (const auto& r : p.bc_log.rows)
    s += "bc," + std::to_string(r.step) + "," + csv_num(r.loss) + ",,\n";
  train_rows_csv(s, "sarsa", p.q_log);
  train_rows_csv(s, "refine", p.refine_log);
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline configuration: JSON <-> struct, with CLI flag overrides

struct ImproveSettings {
  PipelineConfig pipe;
  std::size_t rounds = 0;
  EvalRoundConfig round;
  IterativeConfig iter;
  std::string env_name;  // resolved; may be empty (no rollout section)
};

ImproveSettings resolve_settings(const json& cfg, const Dataset& data,
                                 const std::string& cli_env,
                                 const std::string& cli_operator,
                                 double cli_log_tau, bool has_log_tau) {
  ImproveSettings s;

  s.env_name = cli_env;
  if (s.env_name.empty() && !data.metadata_json.empty()) {
    json md = json::parse(data.metadata_json, nullptr, false);
    if (!md.is_discarded() && md.contains("env"))
      s.env_name = md["env"].get<std::string>();
  }
  if (!s.env_name.empty()) {
    const EnvSpec& spec = get_env(s.env_name).spec();
    s.pipe.gamma = spec.gamma;
    s.pipe.bounds = {spec.action_low, spec.action_high};
  }

  PipelineConfig& c = s.pipe;
  c.bc_components = jget<std::size_t>(cfg, "bc_components", c.bc_components);
  c.bc_hidden = jget_sizes(cfg, "bc_hidden", c.bc_hidden);
  c.bc_steps = jget<std::size_t>(cfg, "bc_steps", c.bc_steps);
  c.bc_batch = jget<std::size_t>(cfg, "bc_batch", c.bc_batch);
  c.bc_lr = jget<double>(cfg, "bc_lr", c.bc_lr);
  c.n_quantiles = jget<std::size_t>(cfg, "n_quantiles", c.n_quantiles);
  c.q_hidden = jget_sizes(cfg, "q_hidden", c.q_hidden);
  c.sarsa_steps = jget<std::size_t>(cfg, "sarsa_steps", c.sarsa_steps);
  c.sarsa_batch = jget<std::size_t>(cfg, "sarsa_batch", c.sarsa_batch);
  c.sarsa_lr = jget<double>(cfg, "sarsa_lr", c.sarsa_lr);
  c.gamma = jget<double>(cfg, "gamma", c.gamma);
  c.polyak = jget<double>(cfg, "polyak", c.polyak);
  c.log_every = jget<std::size_t>(cfg, "log_every", c.log_every);
  c.bounds.low = jget<double>(cfg, "action_low", c.bounds.low);
  c.bounds.high = jget<double>(cfg, "action_high", c.bounds.high);

  std::string op_name(operator_kind_name(c.op.kind));
  op_name = jget<std::string>(cfg, "operator", op_name);
  if (!cli_operator.empty()) op_name = cli_operator;
  c.op.kind = operator_kind_from_name(op_name);
  c.op.log_tau = jget<double>(cfg, "log_tau", c.op.log_tau);
  if (has_log_tau) c.op.log_tau = cli_log_tau;
  c.op.det_delta = jget<double>(cfg, "det_delta", c.op.det_delta);
  c.op.m_samples = jget<std::size_t>(cfg, "m_samples", c.op.m_samples);
  c.op.mode_threshold = jget<double>(cfg, "mode_threshold", c.op.mode_threshold);

  s.rounds = jget<std::size_t>(cfg, "rounds", 0);
  s.round.steps_per_round =
      jget<std::size_t>(cfg, "round_steps", s.round.steps_per_round);
  s.round.batch = jget<std::size_t>(cfg, "round_batch", s.round.batch);
  s.round.lr = jget<double>(cfg, "round_lr", s.round.lr);
  s.round.polyak = jget<double>(cfg, "round_polyak", s.round.polyak);
  s.round.log_every = jget<std::size_t>(cfg, "round_log_every", s.round.log_every);

  s.iter.steps = jget<std::size_t>(cfg, "iter_steps", s.iter.steps);
  s.iter.batch = jget<std::size_t>(cfg, "iter_batch", s.iter.batch);
  s.iter.lr = jget<double>(cfg, "iter_lr", s.iter.lr);
  s.iter.noise_sd = jget<double>(cfg, "noise_sd", s.iter.noise_sd);
  s.iter.noise_clip = jget<double>(cfg, "noise_clip", s.iter.noise_clip);
  s.iter.polyak = jget<double>(cfg, "iter_polyak", s.iter.polyak);
  s.iter.log_every = jget<std::size_t>(cfg, "iter_log_every", s.iter.log_every);
  return s;
}

void emit_pipeline_config(jsonio::Writer& w, const std::string& command,
                          const std::string& data_path, std::uint64_t seed,
                          const Dataset& data, const ImproveSettings& s,
                          std::uint64_t sample_seed) {
  const PipelineConfig& c = s.pipe;
  w.begin_obj();
  w.key("command").str(command);
  w.key("data").str(data_path);
  w.key("env").str(s.env_name);
  w.key("seed").num_uint(seed);
  w.key("state_dim").num_uint(data.state_dim);
  w.key("action_dim").num_uint(data.action_dim);
  w.key("bc_components").num_uint(c.bc_components);
  w.key("bc_hidden").begin_arr();
  for (std::size_t h : c.bc_hidden) w.num_uint(h);
  w.end_arr();
  w.key("bc_steps").num_uint(c.bc_steps);
  w.key("bc_batch").num_uint(c.bc_batch);
  w.key("bc_lr").num(c.bc_lr);
  w.key("n_quantiles").num_uint(c.n_quantiles);
  w.key("q_hidden").begin_arr();
  for (std::size_t h : c.q_hidden) w.num_uint(h);
  w.end_arr();
  w.key("sarsa_steps").num_uint(c.sarsa_steps);
  w.key("sarsa_batch").num_uint(c.sarsa_batch);
  w.key("sarsa_lr").num(c.sarsa_lr);
  w.key("gamma").num(c.gamma);
  w.key("polyak").num(c.polyak);
  w.key("log_every").num_uint(c.log_every);
  w.key("operator").str(operator_kind_name(c.op.kind));
  w.key("log_tau").num(c.op.log_tau);
  w.key("det_delta").num(c.op.det_delta);
  w.key("m_samples").num_uint(c.op.m_samples);
  w.key("mode_threshold").num(c.op.mode_threshold);
  w.key("sample_seed").num_uint(sample_seed);
  w.key("action_low").num(c.bounds.low);
  w.key("action_high").num(c.bounds.high);
  if (command == "iterate") {
    w.key("iter_steps").num_uint(s.iter.steps);
    w.key("iter_batch").num_uint(s.iter.batch);
    w.key("iter_lr").num(s.iter.lr);
    w.key("noise_sd").num(s.iter.noise_sd);
    w.key("noise_clip").num(s.iter.noise_clip);
    w.key("iter_polyak").num(s.iter.polyak);
    w.key("iter_log_every").num_uint(s.iter.log_every);
  } else {
    w.key("rounds").num_uint(s.rounds);
    w.key("round_steps").num_uint(s.round.steps_per_round);
    w.key("round_batch").num_uint(s.round.batch);
    w.key("round_lr").num(s.round.lr);
    w.key("round_polyak").num(s.round.polyak);
    w.key("round_log_every").num_uint(s.round.log_every);
  }
  w.end_obj();
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(const std::string& env_name, std::size_t episodes,
                 std::uint64_t seed, const std::string& out) {
  if (out.empty()) throw DatasetError("--out is required");
  const Env& env = get_env(env_name);
  BehaviorMix mix = make_behavior_mix(env);
  std::vector<const Policy*> policies;
  for (const auto& p : mix.policies) policies.push_back(p.get());
  Dataset data = generate_heterogeneous(env, policies, mix.fractions,
                                        mix.labels, episodes, Rng(seed));
  save_dataset(out, data);
  std::printf("wrote %zu transitions (%s, %zu episodes) to %s\n", data.size(),
              env_name.c_str(), episodes, out.c_str());
  return 0;
}

int cmd_bc(const std::string& data_path, const std::string& config_path,
           std::uint64_t seed, const std::string& out) {
  const json cfg = load_config_file(config_path);
  Dataset data = load_dataset(data_path);
  const fs::path dir = run_dir_init(out);

  const auto components = jget<std::size_t>(cfg, "components", 4);
  const auto hidden = jget_sizes(cfg, "hidden", {64, 64});
  BcConfig bc;
  bc.steps = jget<std::size_t>(cfg, "steps", bc.steps);
  bc.batch = jget<std::size_t>(cfg, "batch", bc.batch);
  bc.lr = jget<double>(cfg, "lr", bc.lr);
  bc.log_every = jget<std::size_t>(cfg, "log_every", bc.log_every);

  const Rng root(seed);
  Rng r_init = root.fork(0);
  BehaviorHead head(data.state_dim, data.action_dim, components, hidden,
                    r_init);
  Rng r_train = root.fork(1);
  BcLog log = head.train(data, bc, r_train);
  head.save((dir / "checkpoints" / "behavior.ckpt").string(), seed, bc.steps);

  jsonio::Writer cw;
  cw.begin_obj();
  cw.key("command").str("bc");
  cw.key("data").str(data_path);
  cw.key("seed").num_uint(seed);
  cw.key("state_dim").num_uint(data.state_dim);
  cw.key("action_dim").num_uint(data.action_dim);
  cw.key("components").num_uint(components);
  cw.key("hidden").begin_arr();
  for (std::size_t h : hidden) cw.num_uint(h);
  cw.end_arr();
  cw.key("steps").num_uint(bc.steps);
  cw.key("batch").num_uint(bc.batch);
  cw.key("lr").num(bc.lr);
  cw.key("log_every").num_uint(bc.log_every);
  cw.end_obj();
  write_text(dir / "config.json", cw.out());
  write_text(dir / "log.csv", bc_log_csv(log));

  jsonio::Writer rw;
  rw.begin_obj();
  rw.key("final_loss").num(log.rows.back().loss);
  rw.key("steps").num_uint(bc.steps);
  rw.end_obj();
  write_text(dir / "result.json", rw.out());
  std::printf("bc: final nll %s\n", csv_num(log.rows.back().loss).c_str());
  return 0;
}

SarsaConfig sarsa_config_from(const json& cfg) {
  SarsaConfig sc;
  sc.steps = jget<std::size_t>(cfg, "steps", sc.steps);
  sc.batch = jget<std::size_t>(cfg, "batch", sc.batch);
  sc.lr = jget<double>(cfg, "lr", sc.lr);
  sc.gamma = jget<double>(cfg, "gamma", sc.gamma);
  sc.polyak = jget<double>(cfg, "polyak", sc.polyak);
  sc.log_every = jget<std::size_t>(cfg, "log_every", sc.log_every);
  return sc;
}

void emit_sarsa_config(jsonio::Writer& w, const char* command,
                       const std::string& data_path, std::uint64_t seed,
                       const Dataset& data, const CriticConfig& cc,
                       const SarsaConfig& sc) {
  w.key("command").str(command);
  w.key("data").str(data_path);
  w.key("seed").num_uint(seed);
  w.key("state_dim").num_uint(data.state_dim);
  w.key("action_dim").num_uint(data.action_dim);
  w.key("n_quantiles").num_uint(cc.n_quantiles);
  w.key("hidden").begin_arr();
  for (std::size_t h : cc.hidden) w.num_uint(h);
  w.end_arr();
  w.key("steps").num_uint(sc.steps);
  w.key("batch").num_uint(sc.batch);
  w.key("lr").num(sc.lr);
  w.key("gamma").num(sc.gamma);
  w.key("polyak").num(sc.polyak);
  w.key("log_every").num_uint(sc.log_every);
}

int cmd_sarsa(const std::string& data_path, const std::string& config_path,
              std::uint64_t seed, const std::string& out) {
  const json cfg = load_config_file(config_path);
  Dataset data = load_dataset(data_path);
  const fs::path dir = run_dir_init(out);

  CriticConfig cc;
  cc.n_quantiles = jget<std::size_t>(cfg, "n_quantiles", cc.n_quantiles);
  cc.hidden = jget_sizes(cfg, "hidden", cc.hidden);
  SarsaConfig sc = sarsa_config_from(cfg);

  const Rng root(seed);
  Rng r_init = root.fork(0);
  CriticPair critic(data.state_dim, data.action_dim, cc, r_init);
  Rng r_train = root.fork(1);
  TrainLog log = critic.sarsa_train(data, sc, r_train);
  critic.save((dir / "checkpoints" / "critic").string(), seed, sc.steps);

  jsonio::Writer cw;
  cw.begin_obj();
  emit_sarsa_config(cw, "sarsa", data_path, seed, data, cc, sc);
  cw.end_obj();
  write_text(dir / "config.json", cw.out());

  std::string csv = "step,loss1,loss2,q_mean\n";
  for (const auto& r : log.rows)
    csv += std::to_string(r.step) + "," + csv_num(r.loss1) + "," +
           csv_num(r.loss2) + "," + csv_num(r.q_mean) + "\n";
  write_text(dir / "log.csv", csv);

  const TrainLogRow& last = log.rows.back();
  jsonio::Writer rw;
  rw.begin_obj();
  rw.key("final_loss1").num(last.loss1);
  rw.key("final_loss2").num(last.loss2);
  rw.key("final_q_mean").num(last.q_mean);
  rw.key("steps").num_uint(sc.steps);
  rw.end_obj();
  write_text(dir / "result.json", rw.out());
  std::printf("sarsa: final losses %s / %s\n", csv_num(last.loss1).c_str(),
              csv_num(last.loss2).c_str());
  return 0;
}

int cmd_validate_q(const std::string& data_path, const std::string& config_path,
                   std::uint64_t seed, const std::string& out) {
  const json cfg = load_config_file(config_path);
  Dataset data = load_dataset(data_path);
  const fs::path dir = run_dir_init(out);

  CriticConfig cc;
  cc.n_quantiles = jget<std::size_t>(cfg, "n_quantiles", cc.n_quantiles);
  cc.hidden = jget_sizes(cfg, "hidden", cc.hidden);
  SarsaConfig sc = sarsa_config_from(cfg);
  const auto ref_steps = jget<std::size_t>(cfg, "reference_steps", sc.steps * 2);
  const double val_fraction = jget<double>(cfg, "val_fraction", 0.05);
  const auto checkpoints = jget<std::size_t>(cfg, "checkpoints", 10);

  const Rng root(seed);
  // Reference critic: same recipe, trained longer on all rows.
  Rng r_ref = root.fork(0);
  CriticPair reference(data.state_dim, data.action_dim, cc, r_ref);
  SarsaConfig ref_cfg = sc;
  ref_cfg.steps = ref_steps;
  Rng r_ref_train = root.fork(1);
  reference.sarsa_train(data, ref_cfg, r_ref_train);

  Rng r_curve = root.fork(2);
  ValidationCurve curve = kfold_validation_curve(data, reference, cc, sc,
                                                 val_fraction, checkpoints,
                                                 r_curve);

  std::size_t min_i = 0;
  for (std::size_t i = 1; i < curve.val_loss.size(); ++i)
    if (curve.val_loss[i] < curve.val_loss[min_i]) min_i = i;

  jsonio::Writer cw;
  cw.begin_obj();
  emit_sarsa_config(cw, "validate-q", data_path, seed, data, cc, sc);
  cw.key("reference_steps").num_uint(ref_steps);
  cw.key("val_fraction").num(val_fraction);
  cw.key("checkpoints").num_uint(checkpoints);
  cw.end_obj();
  write_text(dir / "config.json", cw.out());

  std::string csv = "step,val_loss\n";
  for (std::size_t i = 0; i < curve.steps.size(); ++i)
    csv += std::to_string(curve.steps[i]) + "," + csv_num(curve.val_loss[i]) +
           "\n";
  write_text(dir / "log.csv", csv);

  jsonio::Writer rw;
  rw.begin_obj();
  rw.key("steps").begin_arr();
  for (std::size_t s : curve.steps) rw.num_uint(s);
  rw.end_arr();
  rw.key("val_loss").num_array(curve.val_loss);
  rw.key("min_step").num_uint(curve.steps[min_i]);
  rw.key("final_step").num_uint(curve.steps.back());
  rw.key("min_before_final").boolean(min_i + 1 < curve.steps.size());
  rw.end_obj();
  write_text(dir / "result.json", rw.out());
  std::printf("validate-q: min val loss at step %zu of %zu\n",
              curve.steps[min_i], curve.steps.back());
  return 0;
}

void emit_safety(jsonio::Writer& w, const Env& env, const Pipeline& p,
                 const ActionBounds& bounds, std::size_t episodes,
                 std::uint64_t seed) {
  ModelSamplePolicy behavior_policy(p.behavior, bounds);
  Rng dummy(0);
  SafetyReport rep = safe_improvement_check(env, *p.policy, behavior_policy,
                                            episodes, 0.05,
                                            Rng(seed).fork(100));
  (void)dummy;
  w.key("episodes").num_uint(episodes);
  w.key("j_improved").num(rep.j_improved);
  w.key("j_behavior").num(rep.j_behavior);
  w.key("margin").num(rep.margin);
  w.key("safe").boolean(rep.safe);
  w.key("normalized_improved")
      .num(normalized_score(rep.j_improved, env.spec()));
  w.key("normalized_behavior")
      .num(normalized_score(rep.j_behavior, env.spec()));
}

int cmd_improve(const std::string& data_path, const std::string& config_path,
                const std::string& cli_env, const std::string& cli_operator,
                double cli_log_tau, bool has_log_tau, std::size_t episodes,
                std::uint64_t seed, const std::string& out, bool iterative) {
  const json cfg = load_config_file(config_path);
  Dataset data = load_dataset(data_path);
  const fs::path dir = run_dir_init(out);
  ImproveSettings s = resolve_settings(cfg, data, cli_env, cli_operator,
                                       cli_log_tau, has_log_tau);

  Pipeline p = iterative
                   ? iterate(data, s.pipe, s.iter, seed)
                   : multi_step(data, s.pipe, s.round, s.rounds, seed);

  p.behavior->save((dir / "checkpoints" / "behavior.ckpt").string(), seed,
                   s.pipe.bc_steps);
  p.critic->save((dir / "checkpoints" / "critic").string(), seed,
                 s.pipe.sarsa_steps);

  jsonio::Writer cw;
  emit_pipeline_config(cw, iterative ? "iterate" : "improve", data_path, seed,
                       data, s, p.policy->params().sample_seed);
  write_text(dir / "config.json", cw.out());
  write_text(dir / "log.csv", pipeline_log_csv(p));

  jsonio::Writer rw;
  rw.begin_obj();
  rw.key("operator").str(operator_kind_name(p.policy->params().kind));
  rw.key("log_tau").num(p.policy->params().log_tau);
  rw.key("bc_final_loss").num(p.bc_log.rows.back().loss);
  rw.key("q_final_loss1").num(p.q_log.rows.back().loss1);
  rw.key("q_final_loss2").num(p.q_log.rows.back().loss2);
  if (!p.refine_log.rows.empty()) {
    rw.key("refine_final_loss1").num(p.refine_log.rows.back().loss1);
    rw.key("refine_final_loss2").num(p.refine_log.rows.back().loss2);
  }
  if (!s.env_name.empty()) {
    rw.key("env").str(s.env_name);
    emit_safety(rw, get_env(s.env_name), p, s.pipe.bounds, episodes, seed);
  }
  rw.end_obj();
  write_text(dir / "result.json", rw.out());
  std::printf("%s: operator %s done\n", iterative ? "iterate" : "improve",
              std::string(operator_kind_name(p.policy->params().kind)).c_str());
  return 0;
}

int cmd_eval(const std::string& run, const std::string& cli_env,
             std::size_t episodes, std::uint64_t seed, const std::string& out) {
  if (run.empty()) throw DatasetError("--run is required");
  const json rc = load_config_file((fs::path(run) / "config.json").string());
  std::string env_name = cli_env.empty()
                             ? jget<std::string>(rc, "env", "")
                             : cli_env;
  if (env_name.empty())
    throw DatasetError("eval: no env recorded in run config; pass --env");
  const Env& env = get_env(env_name);
  const EnvSpec& spec = env.spec();

  const auto state_dim = jget<std::size_t>(rc, "state_dim", 0);
  const auto action_dim = jget<std::size_t>(rc, "action_dim", 0);
  const auto components = jget<std::size_t>(rc, "bc_components", 0);
  if (state_dim == 0 || action_dim == 0 || components == 0)
    throw DatasetError("eval: run config missing model shape keys");

  auto behavior = std::make_shared<BehaviorHead>(BehaviorHead::load(
      (fs::path(run) / "checkpoints" / "behavior.ckpt").string(), action_dim,
      components));
  auto critic = std::make_shared<CriticPair>(CriticPair::load(
      (fs::path(run) / "checkpoints" / "critic").string(), state_dim));

  OperatorParams op;
  op.kind = operator_kind_from_name(jget<std::string>(rc, "operator", "mg"));
  op.log_tau = jget<double>(rc, "log_tau", op.log_tau);
  op.det_delta = jget<double>(rc, "det_delta", op.det_delta);
  op.m_samples = jget<std::size_t>(rc, "m_samples", op.m_samples);
  op.mode_threshold = jget<double>(rc, "mode_threshold", op.mode_threshold);
  op.sample_seed = jget<std::uint64_t>(rc, "sample_seed", 0);
  ActionBounds bounds{jget<double>(rc, "action_low", spec.action_low),
                      jget<double>(rc, "action_high", spec.action_high)};

  ImprovedPolicy policy(behavior, critic, op, bounds);
  const Rng root(seed);
  RolloutStats st = rollout(env, policy, episodes, root.fork(0));
  RolloutStats rnd =
      rollout(env, *make_random_policy(env), episodes, root.fork(1));
  RolloutStats exp =
      rollout(env, *make_expert_policy(env), episodes, root.fork(2));
  ModelSamplePolicy behavior_policy(behavior, bounds);
  RolloutStats beh = rollout(env, behavior_policy, episodes, root.fork(3));

  if (out.empty()) throw DatasetError("--out is required");
  const fs::path dir(out);
  fs::create_directories(dir);
  std::string csv = "episode,return,normalized\n";
  for (std::size_t i = 0; i < st.episode_returns.size(); ++i)
    csv += std::to_string(i) + "," + csv_num(st.episode_returns[i]) + "," +
           csv_num(normalized_score(st.episode_returns[i], spec)) + "\n";
  write_text(dir / "log.csv", csv);

  jsonio::Writer rw;
  rw.begin_obj();
  rw.key("env").str(env_name);
  rw.key("episodes").num_uint(episodes);
  rw.key("operator").str(operator_kind_name(op.kind));
  rw.key("raw_mean").num(st.mean_return);
  rw.key("normalized").num(normalized_score(st.mean_return, spec));
  rw.key("references").begin_obj();
  rw.key("random").num(normalized_score(rnd.mean_return, spec));
  rw.key("expert").num(normalized_score(exp.mean_return, spec));
  rw.key("behavior").num(normalized_score(beh.mean_return, spec));
  rw.end_obj();
  rw.end_obj();
  write_text(dir / "result.json", rw.out());
  std::printf("eval: %s normalized %s\n", env_name.c_str(),
              csv_num(normalized_score(st.mean_return, spec)).c_str());
  return 0;
}

RunMatrix matrix_from_json(const json& j) {
  if (!j.contains("scores") || !j["scores"].is_array() || j["scores"].empty())
    throw DatasetError("report: scores must be a non-empty array of arrays");
  RunMatrix m;
  m.n_tasks = j["scores"].size();
  for (const auto& row : j["scores"]) {
    if (!row.is_array()) throw DatasetError("report: scores rows must be arrays");
    if (m.n_seeds == 0) m.n_seeds = row.size();
    if (row.size() != m.n_seeds)
      throw DatasetError("report: ragged score matrix");
    for (const auto& v : row) m.scores.push_back(v.get<double>());
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw DatasetError(std::string("report: ") + e.what());
  }
  return m;
}

int cmd_report(const std::string& scores_path, const std::string& config_path,
               std::uint64_t seed, const std::string& out) {
  const json cfg = load_config_file(config_path);
  std::ifstream in(scores_path);
  if (!in) throw DatasetError("cannot open scores: " + scores_path);
  json sj = json::parse(in, nullptr, false);
  if (sj.is_discarded())
    throw DatasetError("scores file is not valid JSON: " + scores_path);
  RunMatrix m = matrix_from_json(sj);

  const auto resamples = jget<std::size_t>(cfg, "resamples", 2000);
  const double level = jget<double>(cfg, "level", 0.95);
  const double target = jget<double>(cfg, "target", 100.0);
  std::vector<double> thresholds;
  if (cfg.contains("thresholds")) {
    for (const auto& v : cfg["thresholds"]) thresholds.push_back(v.get<double>());
  } else {
    for (int t = 0; t <= 20; ++t) thresholds.push_back(5.0 * t);
  }

  const fs::path dir(out);
  if (out.empty()) throw DatasetError("--out is required");
  fs::create_directories(dir);
  const Rng root(seed);

  struct Agg {
    const char* name;
    MatrixStatistic stat;
  };
  const Agg aggs[] = {
      {"median", [](const RunMatrix& x) { return median(x.scores); }},
      {"iqm", [](const RunMatrix& x) { return iqm_of(x); }},
      {"mean",
       [](const RunMatrix& x) {
         double acc = 0.0;
         for (double v : x.scores) acc += v;
         return acc / static_cast<double>(x.scores.size());
       }},
      {"optimality_gap",
       [target](const RunMatrix& x) { return optimality_gap(x, target); }},
  };

  std::string agg_csv = "statistic,point,ci_lo,ci_hi\n";
  jsonio::Writer rw;
  rw.begin_obj();
  rw.key("n_tasks").num_uint(m.n_tasks);
  rw.key("n_seeds").num_uint(m.n_seeds);
  rw.key("resamples").num_uint(resamples);
  rw.key("level").num(level);
  rw.key("aggregates").begin_obj();
  for (std::size_t i = 0; i < std::size(aggs); ++i) {
    const double point = aggs[i].stat(m);
    ConfInterval ci = stratified_bootstrap_ci(m, aggs[i].stat, resamples,
                                              level, root.fork(i));
    agg_csv += std::string(aggs[i].name) + "," + csv_num(point) + "," +
               csv_num(ci.lo) + "," + csv_num(ci.hi) + "\n";
    rw.key(aggs[i].name).begin_obj();
    rw.key("point").num(point);
    rw.key("ci_lo").num(ci.lo);
    rw.key("ci_hi").num(ci.hi);
    rw.end_obj();
  }
  rw.end_obj();

  std::vector<double> profile = performance_profile(m, thresholds);
  std::string prof_csv = "threshold,fraction,ci_lo,ci_hi\n";
  rw.key("profile").begin_arr();
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const double eta = thresholds[t];
    MatrixStatistic stat = [eta](const RunMatrix& x) {
      return performance_profile(x, std::vector<double>{eta})[0];
    };
    ConfInterval ci =
        stratified_bootstrap_ci(m, stat, resamples, level, root.fork(100 + t));
    prof_csv += csv_num(eta) + "," + csv_num(profile[t]) + "," +
                csv_num(ci.lo) + "," + csv_num(ci.hi) + "\n";
    rw.begin_obj();
    rw.key("threshold").num(eta);
    rw.key("fraction").num(profile[t]);
    rw.key("ci_lo").num(ci.lo);
    rw.key("ci_hi").num(ci.hi);
    rw.end_obj();
  }
  rw.end_arr();
  rw.end_obj();

  write_text(dir / "aggregates.csv", agg_csv);
  write_text(dir / "profile.csv", prof_csv);
  write_text(dir / "result.json", rw.out());
  std::printf("report: %zu tasks x %zu seeds, iqm %s\n", m.n_tasks, m.n_seeds,
              csv_num(iqm_of(m)).c_str());
  return 0;
}

// Randomized cross-checks of the closed-form operators against the dual
// bisection solvers, plus the tabular solver's Bellman residual and the
// analytic-bandit improvement guarantee.
int cmd_oracle_check(const std::string& config_path, std::uint64_t seed,
                     const std::string& out) {
  const json cfg = load_config_file(config_path);
  const auto instances = jget<std::size_t>(cfg, "instances", 200);
  Rng rng(seed == 0 ? 4242 : seed);
  const double taus[] = {0.1, 0.5, 1.5};

  double worst_sg = 0.0, worst_kkt = 0.0, worst_lse = 0.0, worst_jen = 0.0;
  for (std::size_t it = 0; it < instances; ++it) {
    const std::size_t d = 1 + rng.uniform_int(10);
    const std::size_t n = 1 + rng.uniform_int(8);
    const double lt = taus[it % 3];
    std::vector<double> g(d);
    for (auto& x : g) x = rng.uniform(-3.0, 3.0);

    std::vector<double> w(n);
    double sum = 0.0;
    for (auto& x : w) {
      x = rng.uniform(0.1, 1.0);
      sum += x;
    }
    for (auto& x : w) x /= sum;
    std::vector<DiagGaussian> comps;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> mu(d), var(d);
      for (auto& v : mu) v = rng.uniform(-2.0, 2.0);
      for (auto& v : var) v = rng.uniform(0.1, 10.0);
      comps.emplace_back(std::move(mu), std::move(var));
    }
    GaussianMixture m(std::move(w), std::move(comps));

    const DiagGaussian& c0 = m.components[0];
    std::vector<double> a = improve_sg(c0, {g, c0.mean}, lt);
    std::vector<double> ao = oracle::qclp_sg_bisect(c0, g, lt);
    double o1 = 0.0, o2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      o1 += g[k] * a[k];
      o2 += g[k] * ao[k];
    }
    worst_sg = std::max(worst_sg,
                        std::abs(o1 - o2) / std::max(1.0, std::abs(o2)));
    worst_kkt = std::max(worst_kkt, std::abs(-log_prob(c0, a) -
                                             sg_trust_region(c0, lt).delta));

    std::vector<ActionGradient> grads(n);
    for (std::size_t i = 0; i < n; ++i) grads[i] = {g, m.components[i].mean};
    CandidateAction cl =
        improve_lse(m, grads, lt, [&](std::span<const double> x) {
          double v = 0.0;
          for (std::size_t k = 0; k < d; ++k) v += g[k] * x[k];
          return v;
        });
    oracle::LseOracleResult lo = oracle::qclp_lse_bisect(m, g, lt);
    worst_lse = std::max(worst_lse, std::abs(cl.q_value - lo.objective) /
                                        std::max(1.0, std::abs(lo.objective)));

    PseudoGaussian pg = pseudo_gaussian(m);
    std::vector<double> aj = improve_jensen(m, {g, pg.mean}, lt);
    std::vector<double> jo = oracle::qclp_jensen_bisect(m, g, lt);
    double v1 = 0.0, v2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      v1 += g[k] * aj[k];
      v2 += g[k] * jo[k];
    }
    worst_jen = std::max(worst_jen,
                         std::abs(v1 - v2) / std::max(1.0, std::abs(v2)));
  }

  // Tabular solver: Bellman residual at its own fixed point.
  ChainMdp chain;
  const double p_right = prob_nonnegative_1d(chain.behavior_model());
  std::vector<double> pr(chain.num_states(), p_right);
  std::vector<double> q = chain_dp_q(chain, pr);
  double worst_dp = 0.0;
  for (std::size_t k = 0; k < chain.num_states(); ++k) {
    for (std::size_t bin = 0; bin < 2; ++bin) {
      const std::size_t nk = chain.transition(k, bin);
      const double expect =
          (1.0 - p_right) * q[nk * 2 + 0] + p_right * q[nk * 2 + 1];
      const double target =
          chain.reward(k, bin) + chain.spec().gamma * expect;
      worst_dp = std::max(worst_dp, std::abs(q[k * 2 + bin] - target));
    }
  }

  // Analytic bandit: closed-form improvement must not lose to the behavior.
  QuadraticBandit bandit;
  auto critic = bandit.analytic_critic();
  GaussianMixture behavior = bandit.behavior_model();
  const double j_behavior = bandit.analytic_policy_value(behavior);
  double worst_gain = 1e300;
  const std::vector<double> state{0.0};
  for (double lt : {0.1, 0.5}) {
    CandidateAction mg = improve_mg(behavior, *critic, state, lt);
    worst_gain = std::min(worst_gain,
                          bandit.analytic_action_value(mg.action) - j_behavior);
  }

  const double tol = 1e-6;
  const bool pass = worst_sg < tol && worst_lse < tol && worst_jen < tol &&
                    worst_kkt < 1e-8 && worst_dp < 1e-9 && worst_gain >= 0.0;

  std::printf("oracle-check (%zu instances)\n", instances);
  std::printf("  sg      rel gap  %s\n", csv_num(worst_sg).c_str());
  std::printf("  lse     rel gap  %s\n", csv_num(worst_lse).c_str());
  std::printf("  jensen  rel gap  %s\n", csv_num(worst_jen).c_str());
  std::printf("  kkt     residual %s\n", csv_num(worst_kkt).c_str());
  std::printf("  dp      residual %s\n", csv_num(worst_dp).c_str());
  std::printf("  bandit  min gain %s\n", csv_num(worst_gain).c_str());
  std::printf("  %s\n", pass ? "PASS" : "FAIL");

  if (!out.empty()) {
    jsonio::Writer rw;
    rw.begin_obj();
    rw.key("instances").num_uint(instances);
    rw.key("worst_sg").num(worst_sg);
    rw.key("worst_lse").num(worst_lse);
    rw.key("worst_jensen").num(worst_jen);
    rw.key("worst_kkt").num(worst_kkt);
    rw.key("worst_dp_residual").num(worst_dp);
    rw.key("bandit_min_gain").num(worst_gain);
    rw.key("pass").boolean(pass);
    rw.end_obj();
    fs::create_directories(out);
    write_text(fs::path(out) / "result.json", rw.out());
  }
  if (!pass) throw NumericalError("oracle-check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"closed-form offline policy improvement toolkit"};
  app.require_subcommand(1);

  std::string data_path, config_path, out, env_name, op_name, run_dir,
      scores_path;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  double log_tau = 0.5;

  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-data", "generate a behavior dataset");
  gen->add_option("--env", env_name, "environment name")->required();
  gen->add_option("--episodes", episodes, "episode count")->default_val(500);
  gen->add_option("--seed", seed, "rng seed");
  gen->add_option("--out", out, "output dataset file")->required();
  gen->callback([&] {
    action = [&] { return cmd_gen_data(env_name, episodes, seed, out); };
  });

  auto* bc = app.add_subcommand("bc", "fit the mixture behavior head");
  bc->add_option("--data", data_path, "dataset file")->required();
  bc->add_option("--config", config_path, "JSON config");
  bc->add_option("--seed", seed, "rng seed");
  bc->add_option("--out", out, "run directory")->required();
  bc->callback([&] {
    action = [&] { return cmd_bc(data_path, config_path, seed, out); };
  });

  auto* sarsa = app.add_subcommand("sarsa", "train the quantile critic pair");
  sarsa->add_option("--data", data_path, "dataset file")->required();
  sarsa->add_option("--config", config_path, "JSON config");
  sarsa->add_option("--seed", seed, "rng seed");
  sarsa->add_option("--out", out, "run directory")->required();
  sarsa->callback([&] {
    action = [&] { return cmd_sarsa(data_path, config_path, seed, out); };
  });

  auto* vq = app.add_subcommand("validate-q",
                                "held-out critic validation curve");
  vq->add_option("--data", data_path, "dataset file")->required();
  vq->add_option("--config", config_path, "JSON config");
  vq->add_option("--seed", seed, "rng seed");
  vq->add_option("--out", out, "run directory")->required();
  vq->callback([&] {
    action = [&] { return cmd_validate_q(data_path, config_path, seed, out); };
  });

  auto* improve = app.add_subcommand(
      "improve", "behavior cloning + critic + one policy improvement step");
  improve->add_option("--data", data_path, "dataset file")->required();
  improve->add_option("--config", config_path, "JSON config");
  improve->add_option("--env", env_name,
                      "environment for bounds/rollouts (default: from data)");
  improve->add_option("--operator", op_name,
                      "sg|lse|jensen|mg|mode-select|ebcq|det");
  auto* lt_opt = improve->add_option("--log-tau", log_tau, "trust region size");
  improve->add_option("--episodes", episodes, "rollout episodes")
      ->default_val(100);
  improve->add_option("--seed", seed, "rng seed");
  improve->add_option("--out", out, "run directory")->required();
  improve->callback([&] {
    action = [&] {
      return cmd_improve(data_path, config_path, env_name, op_name, log_tau,
                         lt_opt->count() > 0, episodes, seed, out, false);
    };
  });

  auto* iter = app.add_subcommand(
      "iterate", "iterative improvement with TD critic updates");
  iter->add_option("--data", data_path, "dataset file")->required();
  iter->add_option("--config", config_path, "JSON config");
  iter->add_option("--env", env_name,
                   "environment for bounds/rollouts (default: from data)");
  auto* lt_opt2 = iter->add_option("--log-tau", log_tau, "trust region size");
  iter->add_option("--episodes", episodes, "rollout episodes")
      ->default_val(100);
  iter->add_option("--seed", seed, "rng seed");
  iter->add_option("--out", out, "run directory")->required();
  iter->callback([&] {
    action = [&] {
      return cmd_improve(data_path, config_path, env_name, "", log_tau,
                         lt_opt2->count() > 0, episodes, seed, out, true);
    };
  });

  auto* ev = app.add_subcommand("eval", "roll out a saved improved policy");
  ev->add_option("--run", run_dir, "run directory from improve/iterate")
      ->required();
  ev->add_option("--env", env_name, "environment (default: from run config)");
  ev->add_option("--episodes", episodes, "episode count")->default_val(100);
  ev->add_option("--seed", seed, "rng seed");
  ev->add_option("--out", out, "output directory")->required();
  ev->callback([&] {
    action = [&] { return cmd_eval(run_dir, env_name, episodes, seed, out); };
  });

  auto* rep = app.add_subcommand("report", "aggregate a score matrix");
  rep->add_option("--scores", scores_path, "JSON score matrix")->required();
  rep->add_option("--config", config_path, "JSON config");
  rep->add_option("--seed", seed, "rng seed");
  rep->add_option("--out", out, "output directory")->required();
  rep->callback([&] {
    action = [&] { return cmd_report(scores_path, config_path, seed, out); };
  });

  auto* oc = app.add_subcommand("oracle-check",
                                "cross-check operators against slow solvers");
  oc->add_option("--config", config_path, "JSON config");
  oc->add_option("--seed", seed, "rng seed");
  oc->add_option("--out", out, "output directory");
  oc->callback([&] {
    action = [&] { return cmd_oracle_check(config_path, seed, out); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return action ? action() : 1;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
