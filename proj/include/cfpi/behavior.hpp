#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cfpi/autodiff.hpp"
#include "cfpi/dataset.hpp"
#include "cfpi/gaussian.hpp"
#include "cfpi/rng.hpp"

namespace cfpi {

// State-conditioned action distribution; the common face of learned behavior
// heads and fixed ground-truth models.
class ConditionalModel {
public:
  virtual ~ConditionalModel() = default;
  virtual GaussianMixture condition(std::span<const double> state) const = 0;
  virtual std::size_t action_dim() const = 0;
};

class FixedConditionalModel : public ConditionalModel {
public:
  explicit FixedConditionalModel(GaussianMixture m) : model_(std::move(m)) {}
  GaussianMixture condition(std::span<const double>) const override {
    return model_;
  }
  std::size_t action_dim() const override { return model_.dim(); }

private:
  GaussianMixture model_;
};

struct BcConfig {
  std::size_t steps = 4000;
  std::size_t batch = 256;  // 512 is the usual single-component setting
  double lr = 1e-3;
  std::size_t log_every = 200;
};

struct BcLogRow {
  std::size_t step = 0;
  double loss = 0.0;
};

struct BcLog {
  std::vector<BcLogRow> rows;
};

// Mixture-density behavior head: one trunk MLP emits, per state,
// [component means | log variances | logits]. A single component makes it
// the plain Gaussian head. Conditioning floors variances at kVarFloor and
// renormalizes softmax weights.
class BehaviorHead : public ConditionalModel {
public:
  BehaviorHead(std::size_t state_dim, std::size_t action_dim,
               std::size_t components, std::vector<std::size_t> hidden,
               Rng& rng);

  GaussianMixture condition(std::span<const double> state) const override;
  std::size_t action_dim() const override { return action_dim_; }
  std::size_t components() const { return components_; }
  std::size_t state_dim() const { return trunk_.in_dim; }

  // Mean negative log-likelihood of actions under the conditioned mixture,
  // matching log_prob() on the conditioned model to rounding error.
  double loss_value(std::span<const double> states,
                    std::span<const double> actions, std::size_t batch) const;

  BcLog train(const Dataset& data, const BcConfig& cfg, Rng& rng);

  const Mlp& trunk() const { return trunk_; }

  void save(const std::string& path, std::uint64_t seed,
            std::uint64_t steps) const;
  // Component count and action dim are not recoverable from the trunk shape
  // alone; the caller supplies them (they live in the run config).
  static BehaviorHead load(const std::string& path, std::size_t action_dim,
                           std::size_t components);

private:
  BehaviorHead() = default;

  // Pushes the NLL graph for a batch; returns the scalar loss node.
  Tape::Id build_loss(Tape& tape, MlpGraph& graph,
                      std::span<const double> states,
                      std::span<const double> actions,
                      std::size_t batch) const;

  std::size_t action_dim_ = 0;
  std::size_t components_ = 0;
  Mlp trunk_;
};

}  // namespace cfpi
