#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "cfpi/behavior.hpp"
#include "cfpi/constants.hpp"
#include "cfpi/dataset.hpp"
#include "cfpi/gaussian.hpp"
#include "cfpi/rng.hpp"
#include "doctest.h"

using namespace cfpi;

namespace {

// 1-D states, 1-D bimodal actions around +/- 0.8 with mild noise.
Dataset bimodal_dataset(std::size_t n, std::uint64_t seed) {
  Dataset d;
  d.state_dim = 1;
  d.action_dim = 1;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rng.normal(0.0, 1.0);
    double a = (rng.uniform() < 0.5 ? -0.8 : 0.8) + rng.normal(0.0, 0.1);
    d.states.push_back(s);
    d.actions.push_back(a);
    d.rewards.push_back(0.0);
    d.next_states.push_back(s);
    d.next_actions.push_back(a);
    d.dones.push_back(0.0);
  }
  return d;
}

}  // namespace

TEST_CASE("conditioning yields a normalized floored mixture") {
  Rng rng(501);
  BehaviorHead head(2, 3, 4, {16}, rng);
  CHECK(head.state_dim() == 2);
  CHECK(head.action_dim() == 3);
  CHECK(head.components() == 4);
  Rng probe(502);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s = {probe.normal(0.0, 2.0), probe.normal(0.0, 2.0)};
    auto m = head.condition(s);
    REQUIRE(m.size() == 4);
    REQUIRE(m.dim() == 3);
    double total = 0.0;
    for (double w : m.weights) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& c : m.components)
      for (double v : c.var) CHECK(v >= kVarFloor);
  }
}

TEST_CASE("reported loss is the negative mean conditional log density") {
  Rng rng(503);
  BehaviorHead head(1, 2, 3, {12}, rng);
  Rng probe(504);
  const std::size_t B = 7;
  std::vector<double> states(B), actions(B * 2);
  for (std::size_t i = 0; i < B; ++i) {
    states[i] = probe.normal();
    actions[2 * i] = probe.normal();
    actions[2 * i + 1] = probe.normal();
  }
  double direct = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    std::vector<double> s = {states[i]};
    std::vector<double> a = {actions[2 * i], actions[2 * i + 1]};
    direct += log_prob(head.condition(s), a);
  }
  direct /= static_cast<double>(B);
  CHECK(head.loss_value(states, actions, B) ==
        doctest::Approx(-direct).epsilon(1e-10));
}

TEST_CASE("likelihood training finds both action modes") {
  Dataset data = bimodal_dataset(512, 505);
  Rng init(506);
  BehaviorHead head(1, 1, 2, {16}, init);
  double before = head.loss_value(data.states, data.actions, data.size());
  BcConfig cfg;
  cfg.steps = 1200;
  cfg.batch = 64;
  cfg.lr = 5e-3;
  cfg.log_every = 300;
  Rng trng(507);
  auto log = head.train(data, cfg, trng);
  REQUIRE(!log.rows.empty());
  CHECK(log.rows.front().step == 1);
  CHECK(log.rows.back().step == 1200);
  double after = head.loss_value(data.states, data.actions, data.size());
  CHECK(after < before - 0.5);

  std::vector<double> s = {0.0};
  auto m = head.condition(s);
  REQUIRE(m.size() == 2);
  double mu0 = m.components[0].mean[0], mu1 = m.components[1].mean[0];
  CHECK(std::abs(mu0 - mu1) > 0.8);
  CHECK(std::abs(mu0) < 1.5);
  CHECK(std::abs(mu1) < 1.5);
  CHECK(m.weights[0] == doctest::Approx(0.5).epsilon(0.35));
}

TEST_CASE("behavior head save and load round-trips conditioning exactly") {
  Rng rng(508);
  BehaviorHead head(2, 2, 3, {10}, rng);
  auto dir = std::filesystem::temp_directory_path() / "cfpi_behavior_ckpt";
  std::filesystem::create_directories(dir);
  auto path = (dir / "behavior.ckpt").string();
  head.save(path, 99ULL, 1234ULL);
  BehaviorHead back = BehaviorHead::load(path, 2, 3);
  CHECK(back.state_dim() == 2);
  CHECK(back.action_dim() == 2);
  CHECK(back.components() == 3);
  Rng probe(509);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> s = {probe.normal(), probe.normal()};
    auto a = head.condition(s);
    auto b = back.condition(s);
    REQUIRE(b.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b.weights[i] == a.weights[i]);
      for (std::size_t k = 0; k < a.dim(); ++k) {
        CHECK(b.components[i].mean[k] == a.components[i].mean[k]);
        CHECK(b.components[i].var[k] == a.components[i].var[k]);
      }
    }
  }
  // A mismatched head shape is rejected.
  CHECK_THROWS_AS(BehaviorHead::load(path, 2, 4), std::runtime_error);
  CHECK_THROWS_AS(BehaviorHead::load(path, 3, 3), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("construction and training validate their inputs") {
  Rng rng(510);
  CHECK_THROWS_AS(BehaviorHead(0, 1, 2, {8}, rng), std::invalid_argument);
  CHECK_THROWS_AS(BehaviorHead(1, 0, 2, {8}, rng), std::invalid_argument);
  CHECK_THROWS_AS(BehaviorHead(1, 1, 0, {8}, rng), std::invalid_argument);

  BehaviorHead head(2, 1, 2, {8}, rng);
  Dataset wrong = bimodal_dataset(16, 511);  // state_dim 1, head expects 2
  BcConfig cfg;
  cfg.steps = 5;
  Rng trng(512);
  CHECK_THROWS_AS(head.train(wrong, cfg, trng), std::invalid_argument);
  Dataset empty;
  empty.state_dim = 2;
  empty.action_dim = 1;
  CHECK_THROWS_AS(head.train(empty, cfg, trng), std::invalid_argument);
}

TEST_CASE("fixed conditional model returns its mixture for every state") {
  DiagGaussian g0({-1.0, 0.0}, {0.5, 0.5});
  DiagGaussian g1({1.0, 0.5}, {0.25, 1.0});
  GaussianMixture m({0.3, 0.7}, {g0, g1});
  FixedConditionalModel model(m);
  CHECK(model.action_dim() == 2);
  std::vector<double> s1 = {0.0}, s2 = {123.0};
  auto a = model.condition(s1);
  auto b = model.condition(s2);
  CHECK(a.weights == m.weights);
  CHECK(b.weights == m.weights);
  CHECK(a.components[0].mean == g0.mean);
  CHECK(b.components[1].mean == g1.mean);
}
