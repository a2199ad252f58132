#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cfpi/autodiff.hpp"
#include "cfpi/rng.hpp"
#include "doctest.h"

using namespace cfpi;

namespace {

using Builder = std::function<Tape::Id(Tape&, Tape::Id)>;

double eval_scalar(const Builder& build, const std::vector<double>& x,
                   std::size_t rows, std::size_t cols) {
  Tape tape;
  Tape::Id leaf = tape.leaf(rows, cols, x);
  Tape::Id loss = build(tape, leaf);
  return tape.val(loss)[0];
}

// Compares reverse-mode input gradients against central differences.
void check_input_grad(const Builder& build, std::vector<double> x0,
                      std::size_t rows, std::size_t cols, double tol = 1e-6) {
  Tape tape;
  Tape::Id leaf = tape.leaf(rows, cols, x0);
  Tape::Id loss = build(tape, leaf);
  REQUIRE(tape.val(loss).size() == 1);
  tape.backward(loss);
  std::vector<double> g(tape.grad(leaf).begin(), tape.grad(leaf).end());
  const double h = 1e-5;
  for (std::size_t k = 0; k < x0.size(); ++k) {
    auto xp = x0, xm = x0;
    xp[k] += h;
    xm[k] -= h;
    double fd = (eval_scalar(build, xp, rows, cols) -
                 eval_scalar(build, xm, rows, cols)) /
                (2.0 * h);
    CHECK(std::abs(g[k] - fd) <= tol * std::max(1.0, std::abs(fd)));
  }
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

// Weighted sum with fixed weights turns any output into a scalar loss whose
// gradient distinguishes the elements.
Tape::Id weighted(Tape& t, Tape::Id y, const std::vector<double>& w) {
  return t.sum_all(t.mul(y, t.leaf(t.rows(y), t.cols(y), w)));
}

}  // namespace

TEST_CASE("elementwise op gradients match central differences") {
  Rng rng(301);
  auto w = random_vec(rng, 6, -1.0, 1.0);
  auto x = random_vec(rng, 6, 0.3, 2.0);  // positive: safe for log/recip

  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.square(in), w); }, x, 2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.scale(in, -1.7), w); }, x,
      2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.add_const(in, 2.5), w); },
      x, 2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.log_(in), w); }, x, 2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.recip(in), w); }, x, 2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.exp_floor(in, 1e-8), w); },
      x, 2, 3);
  auto other = random_vec(rng, 6, -2.0, 2.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.add(in, t.leaf(2, 3, other)), w);
      },
      x, 2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.sub(t.leaf(2, 3, other), in), w);
      },
      x, 2, 3);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.mul(in, t.leaf(2, 3, other)), w);
      },
      x, 2, 3);
}

TEST_CASE("relu gradient matches central differences away from the kink") {
  Rng rng(302);
  std::vector<double> x = {-1.5, -0.4, 0.3, 1.2, -2.0, 0.9};
  auto w = random_vec(rng, 6, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.relu(in), w); }, x, 2, 3);
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Tape tape;
  std::vector<double> x = {-1.0, 0.0, 2.0};
  auto in = tape.leaf(1, 3, x);
  auto loss = tape.sum_all(tape.relu(in));
  tape.backward(loss);
  auto g = tape.grad(in);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("exp floor clamps the value and kills the gradient where it binds") {
  Tape tape;
  std::vector<double> x = {-30.0, 0.5};
  auto in = tape.leaf(1, 2, x);
  auto y = tape.exp_floor(in, 1e-8);
  auto loss = tape.sum_all(y);
  CHECK(tape.val(y)[0] == 1e-8);
  CHECK(tape.val(y)[1] == doctest::Approx(std::exp(0.5)).epsilon(1e-14));
  tape.backward(loss);
  CHECK(tape.grad(in)[0] == 0.0);
  CHECK(tape.grad(in)[1] == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
}

TEST_CASE("linear layer gradients match central differences") {
  Rng rng(303);
  const std::size_t B = 3, in_dim = 4, out_dim = 2;
  auto xd = random_vec(rng, B * in_dim, -1.0, 1.0);
  auto Wd = random_vec(rng, out_dim * in_dim, -1.0, 1.0);
  auto bd = random_vec(rng, out_dim, -0.5, 0.5);
  auto w = random_vec(rng, B * out_dim, -1.0, 1.0);

  // Differentiate with respect to the input.
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        auto W = t.leaf(out_dim, in_dim, Wd);
        auto b = t.leaf(1, out_dim, bd);
        return weighted(t, t.linear(W, b, in), w);
      },
      xd, B, in_dim);
  // With respect to the weight matrix.
  check_input_grad(
      [&](Tape& t, Tape::Id W) {
        auto xl = t.leaf(B, in_dim, xd);
        auto b = t.leaf(1, out_dim, bd);
        return weighted(t, t.linear(W, b, xl), w);
      },
      Wd, out_dim, in_dim);
  // With respect to the bias.
  check_input_grad(
      [&](Tape& t, Tape::Id b) {
        auto xl = t.leaf(B, in_dim, xd);
        auto W = t.leaf(out_dim, in_dim, Wd);
        return weighted(t, t.linear(W, b, xl), w);
      },
      bd, 1, out_dim);
}

TEST_CASE("shape op gradients match central differences") {
  Rng rng(304);
  auto x6 = random_vec(rng, 6, -1.5, 1.5);

  auto w8 = random_vec(rng, 8, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        auto other = t.leaf(2, 1, std::vector<double>{0.3, -0.8});
        return weighted(t, t.concat_cols(in, other), w8);
      },
      x6, 2, 3);
  auto w4 = random_vec(rng, 4, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.slice_cols(in, 1, 2), w4);
      },
      x6, 2, 3);
  auto w12 = random_vec(rng, 12, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return weighted(t, t.tile_cols(in, 2), w12); },
      x6, 2, 3);
  auto w2 = random_vec(rng, 2, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.group_sum_cols(in, 1, 3), w2);
      },
      x6, 2, 3);
}

TEST_CASE("reduction op gradients match central differences") {
  Rng rng(305);
  auto x = random_vec(rng, 8, -2.0, 2.0);
  check_input_grad([&](Tape& t, Tape::Id in) { return t.sum_all(in); }, x, 2, 4);
  check_input_grad([&](Tape& t, Tape::Id in) { return t.mean_all(in); }, x, 2, 4);
  auto w2 = random_vec(rng, 2, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.logsumexp_rows(in), w2);
      },
      x, 2, 4);
  auto w8 = random_vec(rng, 8, -1.0, 1.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) {
        return weighted(t, t.log_softmax_rows(in), w8);
      },
      x, 2, 4);
}

TEST_CASE("logsumexp and log softmax values are max shifted and consistent") {
  Tape tape;
  std::vector<double> x = {1000.0, 1001.0, -1000.0, -1001.0};
  auto in = tape.leaf(2, 2, x);
  auto lse = tape.logsumexp_rows(in);
  auto ls = tape.log_softmax_rows(in);
  CHECK(tape.val(lse)[0] ==
        doctest::Approx(1001.0 + std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(std::isfinite(tape.val(lse)[1]));
  // log softmax rows sum to log-probabilities: exp sums to one.
  double s = std::exp(tape.val(ls)[0]) + std::exp(tape.val(ls)[1]);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Tape tape;
  std::vector<double> x = {3.0};
  auto in = tape.leaf(1, 1, x);
  // loss = x + x^2; dl/dx = 1 + 2x = 7
  auto loss = tape.sum_all(tape.add(in, tape.square(in)));
  tape.backward(loss);
  CHECK(tape.grad(in)[0] == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("quantile huber loss matches a hand-computed two-quantile case") {
  Tape tape;
  std::vector<double> pred = {0.0, 1.0};
  std::vector<double> targets = {0.5, 2.0};
  auto p = tape.leaf(1, 2, pred);
  auto loss = tape.quantile_huber_loss(p, targets);
  // Fractions 0.25/0.75, kappa=1, each target weighted 1/2:
  //   pairs (t,p): (0.5,0) .25*.125  (0.5,1) .25*.125
  //                (2,0)   .25*1.5   (2,1)   .75*.5     all scaled by 1/2
  CHECK(tape.val(loss)[0] == doctest::Approx(0.40625).epsilon(1e-14));
  tape.backward(loss);
  CHECK(tape.grad(p)[0] == doctest::Approx(-0.1875).epsilon(1e-13));
  CHECK(tape.grad(p)[1] == doctest::Approx(-0.3125).epsilon(1e-13));
}

TEST_CASE("quantile huber loss gradient matches central differences") {
  Rng rng(306);
  auto pred = random_vec(rng, 8, -2.0, 2.0);
  auto targets = random_vec(rng, 8, -2.0, 2.0);
  check_input_grad(
      [&](Tape& t, Tape::Id in) { return t.quantile_huber_loss(in, targets); },
      pred, 2, 4, 1e-5);
}

TEST_CASE("mlp forward on the tape matches the tape-free evaluator") {
  Rng rng(307);
  for (int t = 0; t < 5; ++t) {
    auto mlp = Mlp::init(3, 4, {8, 6}, rng);
    const std::size_t B = 5;
    auto x = random_vec(rng, B * 3, -2.0, 2.0);
    Tape tape;
    auto g = mlp_forward(tape, mlp, tape.leaf(B, 3, x));
    std::vector<double> y;
    mlp_forward_values(mlp, x, B, y);
    auto ref = tape.val(g.out);
    REQUIRE(y.size() == ref.size());
    for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == ref[k]);
  }
}

TEST_CASE("full mlp parameter and input gradients match central differences") {
  Rng rng(308);
  const std::size_t B = 3, in_dim = 3, out_dim = 2;
  for (int trial = 0; trial < 4; ++trial) {
    auto mlp = Mlp::init(in_dim, out_dim, {5, 4}, rng);
    auto xs = random_vec(rng, B * in_dim, -1.5, 1.5);

    auto loss_value = [&](const Mlp& m, const std::vector<double>& x) {
      Tape tape;
      auto g = mlp_forward(tape, m, tape.leaf(B, in_dim, x));
      return tape.val(tape.mean_all(tape.square(g.out)))[0];
    };

    Tape tape;
    auto xid = tape.leaf(B, in_dim, xs);
    auto graph = mlp_forward(tape, mlp, xid);
    auto loss = tape.mean_all(tape.square(graph.out));
    tape.backward(loss);

    const double h = 1e-5, tol = 1e-4;
    for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
      auto gw = tape.grad(graph.w_ids[l]);
      for (std::size_t k = 0; k < mlp.W[l].size(); ++k) {
        Mlp mp = mlp, mm = mlp;
        mp.W[l][k] += h;
        mm.W[l][k] -= h;
        double fd = (loss_value(mp, xs) - loss_value(mm, xs)) / (2.0 * h);
        CHECK(std::abs(gw[k] - fd) <= tol * std::max(1.0, std::abs(fd)));
      }
      auto gb = tape.grad(graph.b_ids[l]);
      for (std::size_t k = 0; k < mlp.b[l].size(); ++k) {
        Mlp mp = mlp, mm = mlp;
        mp.b[l][k] += h;
        mm.b[l][k] -= h;
        double fd = (loss_value(mp, xs) - loss_value(mm, xs)) / (2.0 * h);
        CHECK(std::abs(gb[k] - fd) <= tol * std::max(1.0, std::abs(fd)));
      }
    }
    auto gx = tape.grad(xid);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      auto xp = xs, xm = xs;
      xp[k] += h;
      xm[k] -= h;
      double fd = (loss_value(mlp, xp) - loss_value(mlp, xm)) / (2.0 * h);
      CHECK(std::abs(gx[k] - fd) <= tol * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("adam drives a small regression loss toward zero") {
  Rng rng(309);
  auto mlp = Mlp::init(1, 1, {}, rng);
  std::vector<double> x = {1.0};
  Adam opt(mlp, 0.05);
  auto loss_at = [&](const Mlp& m) {
    Tape tape;
    auto g = mlp_forward(tape, m, tape.leaf(1, 1, x));
    return tape.val(tape.mean_all(tape.square(tape.add_const(g.out, -3.0))))[0];
  };
  double initial = loss_at(mlp);
  for (int step = 0; step < 600; ++step) {
    Tape tape;
    auto g = mlp_forward(tape, mlp, tape.leaf(1, 1, x));
    auto loss = tape.mean_all(tape.square(tape.add_const(g.out, -3.0)));
    tape.backward(loss);
    opt.step(mlp, tape, g);
  }
  CHECK(loss_at(mlp) < std::max(1e-6, initial * 1e-4));
}

TEST_CASE("checkpoint round-trip is bit exact and keeps the sidecar") {
  Rng rng(310);
  auto mlp = Mlp::init(4, 3, {7, 5}, rng);
  auto dir = std::filesystem::temp_directory_path() / "cfpi_ckpt_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "net.ckpt").string();
  save_checkpoint(path, mlp, 123456789ULL, 42ULL);
  std::uint64_t seed = 0, steps = 0;
  Mlp back = load_checkpoint(path, &seed, &steps);
  CHECK(seed == 123456789ULL);
  CHECK(steps == 42ULL);
  REQUIRE(back.num_layers() == mlp.num_layers());
  CHECK(back.in_dim == mlp.in_dim);
  CHECK(back.out_dim == mlp.out_dim);
  CHECK(back.hidden == mlp.hidden);
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    CHECK(back.W[l] == mlp.W[l]);
    CHECK(back.b[l] == mlp.b[l]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects missing and corrupt files") {
  auto dir = std::filesystem::temp_directory_path() / "cfpi_ckpt_bad";
  std::filesystem::create_directories(dir);
  auto missing = (dir / "nope.ckpt").string();
  CHECK_THROWS_AS(load_checkpoint(missing), std::runtime_error);
  auto bad = (dir / "bad.ckpt").string();
  {
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    REQUIRE(f != nullptr);
    const char junk[] = "not a checkpoint";
    std::fwrite(junk, 1, sizeof junk, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("tape rejects malformed graphs") {
  Tape tape;
  std::vector<double> x = {1.0, 2.0};
  auto in = tape.leaf(1, 2, x);
  CHECK_THROWS_AS(tape.backward(in), std::invalid_argument);
  std::vector<double> short_data = {1.0};
  CHECK_THROWS_AS(tape.leaf(1, 2, short_data), std::invalid_argument);
  CHECK_THROWS_AS(tape.slice_cols(in, 1, 5), std::invalid_argument);
}
