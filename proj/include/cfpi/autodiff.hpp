#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfpi/rng.hpp"

namespace cfpi {

// Tape-based reverse-mode autodiff over small batched tensors (row-major,
// rows x cols). Nodes are created in topological order, so backward() is a
// single reverse sweep over the creation order. Gradients accumulate, start
// at zero, and stay zero for nodes the loss does not depend on.
class Tape {
public:
  using Id = std::size_t;

  Id leaf(std::size_t rows, std::size_t cols, std::span<const double> data);
  Id zeros(std::size_t rows, std::size_t cols);

  // y = x W^T + b with x: B x in, W: out x in, b: 1 x out.
  Id linear(Id W, Id b, Id x);
  Id relu(Id x);  // subgradient 0 at exactly 0

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id x, double c);
  Id add_const(Id x, double c);
  Id square(Id x);
  // max(exp(x), floor); derivative 0 where the floor binds
  Id exp_floor(Id x, double floor);
  Id log_(Id x);
  Id recip(Id x);

  Id concat_cols(Id a, Id b);
  Id slice_cols(Id x, std::size_t start, std::size_t len);
  // repeat the column block `times` times: B x c -> B x (times*c)
  Id tile_cols(Id x, std::size_t times);
  // sum consecutive blocks of group_size columns: B x (g*gs) -> B x g
  Id group_sum_cols(Id x, std::size_t groups, std::size_t group_size);

  Id sum_all(Id x);   // -> 1 x 1
  Id mean_all(Id x);  // -> 1 x 1
  Id logsumexp_rows(Id x);     // B x C -> B x 1, max-shifted
  Id log_softmax_rows(Id x);   // B x C -> B x C

  // Mean over the batch of the quantile-regression Huber objective between
  // predicted quantiles (B x n) and fixed target quantiles (B x n), with n
  // uniform fractions. Targets are constants (no gradient flows to them).
  Id quantile_huber_loss(Id pred, const std::vector<double>& targets);

  void backward(Id loss);

  std::span<const double> val(Id id) const;
  std::span<const double> grad(Id id) const;
  std::size_t rows(Id id) const { return nodes_[id].rows; }
  std::size_t cols(Id id) const { return nodes_[id].cols; }

  void clear();

private:
  struct Node {
    std::size_t rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Id push(std::size_t rows, std::size_t cols);
  Node& node(Id id) { return nodes_[id]; }

  std::vector<Node> nodes_;
};

enum class Activation { kRelu = 0 };

// Plain fully connected network, double precision; hidden layers all use
// ReLU and the output layer is linear.
struct Mlp {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kRelu;
  std::vector<std::vector<double>> W;  // per layer, out x in row-major
  std::vector<std::vector<double>> b;

  static Mlp init(std::size_t in_dim, std::size_t out_dim,
                  std::vector<std::size_t> hidden, Rng& rng);

  std::size_t num_layers() const { return W.size(); }
  std::vector<std::size_t> layer_sizes() const;  // in, hidden..., out
};

// Handles into a tape after pushing one forward pass of an Mlp.
struct MlpGraph {
  Tape::Id out = 0;
  std::vector<Tape::Id> w_ids;
  std::vector<Tape::Id> b_ids;
};

MlpGraph mlp_forward(Tape& tape, const Mlp& mlp, Tape::Id x);

// Tape-free forward for evaluation hot paths (rollouts, extraction).
void mlp_forward_values(const Mlp& mlp, std::span<const double> x,
                        std::size_t batch, std::vector<double>& y);

// Adam over an Mlp's parameters; moments mirror the layer layout.
class Adam {
public:
  Adam(const Mlp& mlp, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // grads laid out like the parameters: per layer dW then db, read straight
  // from the tape leaves of one backward pass.
  void step(Mlp& mlp, const Tape& tape, const MlpGraph& graph);

  double lr() const { return lr_; }

private:
  void apply(std::vector<double>& p, std::span<const double> g,
             std::vector<double>& m, std::vector<double>& v);

  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> mW_, vW_, mB_, vB_;
};

// Flat binary checkpoint: u32 magic, u32 count of layer sizes, the sizes,
// u32 activation code, then the f64 parameters in layer order (W then b),
// little-endian. A JSON sidecar at <path>.json carries seed and step count.
void save_checkpoint(const std::string& path, const Mlp& mlp,
                     std::uint64_t seed, std::uint64_t steps);
Mlp load_checkpoint(const std::string& path, std::uint64_t* seed_out = nullptr,
                    std::uint64_t* steps_out = nullptr);

}  // namespace cfpi
