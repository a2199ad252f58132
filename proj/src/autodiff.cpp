#include "cfpi/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "cfpi/jsonio.hpp"
#include "cfpi/kernels.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset formats assume a little-endian host");

namespace cfpi {

namespace {
constexpr std::uint32_t kCkptMagic = 0x4e4e5043;  // "CPNN"
}

Tape::Id Tape::push(std::size_t rows, std::size_t cols) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.val.assign(rows * cols, 0.0);
  n.grad.assign(rows * cols, 0.0);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Id Tape::leaf(std::size_t rows, std::size_t cols,
                    std::span<const double> data) {
  if (data.size() != rows * cols)
    throw std::invalid_argument("Tape::leaf: size mismatch");
  Id id = push(rows, cols);
  std::copy(data.begin(), data.end(), nodes_[id].val.begin());
  return id;
}

Tape::Id Tape::zeros(std::size_t rows, std::size_t cols) {
  return push(rows, cols);
}

Tape::Id Tape::linear(Id W, Id b, Id x) {
  const std::size_t out = nodes_[W].rows, in = nodes_[W].cols;
  const std::size_t B = nodes_[x].rows;
  if (nodes_[x].cols != in || nodes_[b].rows != 1 || nodes_[b].cols != out)
    throw std::invalid_argument("Tape::linear: shape mismatch");
  Id y = push(B, out);
  kernels::linear_forward(nodes_[W].val.data(), nodes_[b].val.data(),
                          nodes_[x].val.data(), nodes_[y].val.data(), B, in,
                          out);
  nodes_[y].back = [W, b, x, y, B, in, out](Tape& t) {
    kernels::linear_backward_input(t.nodes_[W].val.data(),
                                   t.nodes_[y].grad.data(),
                                   t.nodes_[x].grad.data(), B, in, out);
    kernels::linear_backward_params(t.nodes_[x].val.data(),
                                    t.nodes_[y].grad.data(),
                                    t.nodes_[W].grad.data(),
                                    t.nodes_[b].grad.data(), B, in, out);
  };
  return y;
}

Tape::Id Tape::relu(Id x) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = nodes_[x].val[i] > 0.0 ? nodes_[x].val[i] : 0.0;
  nodes_[y].back = [x, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i)
      if (t.nodes_[x].val[i] > 0.0) t.nodes_[x].grad[i] += t.nodes_[y].grad[i];
  };
  return y;
}

namespace {
void require_same_shape(const Tape& t, Tape::Id a, Tape::Id b,
                        const char* what) {
  if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
}  // namespace

Tape::Id Tape::add(Id a, Id b) {
  require_same_shape(*this, a, b, "Tape::add");
  Id y = push(nodes_[a].rows, nodes_[a].cols);
  const std::size_t n = nodes_[a].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = nodes_[a].val[i] + nodes_[b].val[i];
  nodes_[y].back = [a, b, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i) {
      t.nodes_[a].grad[i] += t.nodes_[y].grad[i];
      t.nodes_[b].grad[i] += t.nodes_[y].grad[i];
    }
  };
  return y;
}

Tape::Id Tape::sub(Id a, Id b) {
  require_same_shape(*this, a, b, "Tape::sub");
  Id y = push(nodes_[a].rows, nodes_[a].cols);
  const std::size_t n = nodes_[a].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = nodes_[a].val[i] - nodes_[b].val[i];
  nodes_[y].back = [a, b, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i) {
      t.nodes_[a].grad[i] += t.nodes_[y].grad[i];
      t.nodes_[b].grad[i] -= t.nodes_[y].grad[i];
    }
  };
  return y;
}

Tape::Id Tape::mul(Id a, Id b) {
  require_same_shape(*this, a, b, "Tape::mul");
  Id y = push(nodes_[a].rows, nodes_[a].cols);
  const std::size_t n = nodes_[a].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = nodes_[a].val[i] * nodes_[b].val[i];
  nodes_[y].back = [a, b, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i) {
      t.nodes_[a].grad[i] += t.nodes_[b].val[i] * t.nodes_[y].grad[i];
      t.nodes_[b].grad[i] += t.nodes_[a].val[i] * t.nodes_[y].grad[i];
    }
  };
  return y;
}

Tape::Id Tape::scale(Id x, double c) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i) nodes_[y].val[i] = c * nodes_[x].val[i];
  nodes_[y].back = [x, y, n, c](Tape& t) {
    for (std::size_t i = 0; i < n; ++i)
      t.nodes_[x].grad[i] += c * t.nodes_[y].grad[i];
  };
  return y;
}

Tape::Id Tape::add_const(Id x, double c) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i) nodes_[y].val[i] = nodes_[x].val[i] + c;
  nodes_[y].back = [x, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i)
      t.nodes_[x].grad[i] += t.nodes_[y].grad[i];
  };
  return y;
}

Tape::Id Tape::square(Id x) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = nodes_[x].val[i] * nodes_[x].val[i];
  nodes_[y].back = [x, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i)
      t.nodes_[x].grad[i] += 2.0 * t.nodes_[x].val[i] * t.nodes_[y].grad[i];
  };
  return y;
}

Tape::Id Tape::exp_floor(Id x, double floor) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = std::max(std::exp(nodes_[x].val[i]), floor);
  nodes_[y].back = [x, y, n, floor](Tape& t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(t.nodes_[x].val[i]);
      if (e > floor) t.nodes_[x].grad[i] += e * t.nodes_[y].grad[i];
    }
  };
  return y;
}

Tape::Id Tape::log_(Id x) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = std::log(nodes_[x].val[i]);
  nodes_[y].back = [x, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i)
      t.nodes_[x].grad[i] += t.nodes_[y].grad[i] / t.nodes_[x].val[i];
  };
  return y;
}

Tape::Id Tape::recip(Id x) {
  Id y = push(nodes_[x].rows, nodes_[x].cols);
  const std::size_t n = nodes_[x].val.size();
  for (std::size_t i = 0; i < n; ++i)
    nodes_[y].val[i] = 1.0 / nodes_[x].val[i];
  nodes_[y].back = [x, y, n](Tape& t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = t.nodes_[y].val[i];
      t.nodes_[x].grad[i] -= v * v * t.nodes_[y].grad[i];
    }
  };
  return y;
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  if (nodes_[a].rows != nodes_[b].rows)
    throw std::invalid_argument("Tape::concat_cols: row mismatch");
  const std::size_t B = nodes_[a].rows;
  const std::size_t ca = nodes_[a].cols, cb = nodes_[b].cols;
  Id y = push(B, ca + cb);
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(&nodes_[a].val[r * ca], ca, &nodes_[y].val[r * (ca + cb)]);
    std::copy_n(&nodes_[b].val[r * cb], cb,
                &nodes_[y].val[r * (ca + cb) + ca]);
  }
  nodes_[y].back = [a, b, y, B, ca, cb](Tape& t) {
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t i = 0; i < ca; ++i)
        t.nodes_[a].grad[r * ca + i] += t.nodes_[y].grad[r * (ca + cb) + i];
      for (std::size_t i = 0; i < cb; ++i)
        t.nodes_[b].grad[r * cb + i] +=
            t.nodes_[y].grad[r * (ca + cb) + ca + i];
    }
  };
  return y;
}

Tape::Id Tape::slice_cols(Id x, std::size_t start, std::size_t len) {
  const std::size_t B = nodes_[x].rows, C = nodes_[x].cols;
  if (start + len > C)
    throw std::invalid_argument("Tape::slice_cols: out of range");
  Id y = push(B, len);
  for (std::size_t r = 0; r < B; ++r)
    std::copy_n(&nodes_[x].val[r * C + start], len, &nodes_[y].val[r * len]);
  nodes_[y].back = [x, y, B, C, start, len](Tape& t) {
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t i = 0; i < len; ++i)
        t.nodes_[x].grad[r * C + start + i] += t.nodes_[y].grad[r * len + i];
  };
  return y;
}

Tape::Id Tape::tile_cols(Id x, std::size_t times) {
  const std::size_t B = nodes_[x].rows, C = nodes_[x].cols;
  Id y = push(B, C * times);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t k = 0; k < times; ++k)
      std::copy_n(&nodes_[x].val[r * C], C,
                  &nodes_[y].val[(r * times + k) * C]);
  nodes_[y].back = [x, y, B, C, times](Tape& t) {
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t i = 0; i < C; ++i)
          t.nodes_[x].grad[r * C + i] +=
              t.nodes_[y].grad[(r * times + k) * C + i];
  };
  return y;
}

Tape::Id Tape::group_sum_cols(Id x, std::size_t groups,
                              std::size_t group_size) {
  const std::size_t B = nodes_[x].rows, C = nodes_[x].cols;
  if (C != groups * group_size)
    throw std::invalid_argument("Tape::group_sum_cols: shape mismatch");
  Id y = push(B, groups);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t g = 0; g < groups; ++g) {
      double acc = 0.0;
      for (std::size_t i = 0; i < group_size; ++i)
        acc += nodes_[x].val[r * C + g * group_size + i];
      nodes_[y].val[r * groups + g] = acc;
    }
  nodes_[y].back = [x, y, B, C, groups, group_size](Tape& t) {
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t g = 0; g < groups; ++g) {
        const double gy = t.nodes_[y].grad[r * groups + g];
        for (std::size_t i = 0; i < group_size; ++i)
          t.nodes_[x].grad[r * C + g * group_size + i] += gy;
      }
  };
  return y;
}

Tape::Id Tape::sum_all(Id x) {
  Id y = push(1, 1);
  double acc = 0.0;
  for (double v : nodes_[x].val) acc += v;
  nodes_[y].val[0] = acc;
  nodes_[y].back = [x, y](Tape& t) {
    const double gy = t.nodes_[y].grad[0];
    for (double& g : t.nodes_[x].grad) g += gy;
  };
  return y;
}

Tape::Id Tape::mean_all(Id x) {
  Id y = push(1, 1);
  const double inv = 1.0 / static_cast<double>(nodes_[x].val.size());
  double acc = 0.0;
  for (double v : nodes_[x].val) acc += v;
  nodes_[y].val[0] = acc * inv;
  nodes_[y].back = [x, y, inv](Tape& t) {
    const double gy = t.nodes_[y].grad[0] * inv;
    for (double& g : t.nodes_[x].grad) g += gy;
  };
  return y;
}

Tape::Id Tape::logsumexp_rows(Id x) {
  const std::size_t B = nodes_[x].rows, C = nodes_[x].cols;
  Id y = push(B, 1);
  for (std::size_t r = 0; r < B; ++r) {
    const double* row = &nodes_[x].val[r * C];
    double hi = row[0];
    for (std::size_t c = 1; c < C; ++c) hi = std::max(hi, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - hi);
    nodes_[y].val[r] = hi + std::log(s);
  }
  nodes_[y].back = [x, y, B, C](Tape& t) {
    for (std::size_t r = 0; r < B; ++r) {
      const double gy = t.nodes_[y].grad[r];
      const double lse = t.nodes_[y].val[r];
      for (std::size_t c = 0; c < C; ++c)
        t.nodes_[x].grad[r * C + c] +=
            gy * std::exp(t.nodes_[x].val[r * C + c] - lse);
    }
  };
  return y;
}

Tape::Id Tape::log_softmax_rows(Id x) {
  const std::size_t B = nodes_[x].rows, C = nodes_[x].cols;
  Id y = push(B, C);
  for (std::size_t r = 0; r < B; ++r) {
    const double* row = &nodes_[x].val[r * C];
    double hi = row[0];
    for (std::size_t c = 1; c < C; ++c) hi = std::max(hi, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - hi);
    const double lse = hi + std::log(s);
    for (std::size_t c = 0; c < C; ++c)
      nodes_[y].val[r * C + c] = row[c] - lse;
  }
  nodes_[y].back = [x, y, B, C](Tape& t) {
    for (std::size_t r = 0; r < B; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < C; ++c) gsum += t.nodes_[y].grad[r * C + c];
      for (std::size_t c = 0; c < C; ++c)
        t.nodes_[x].grad[r * C + c] +=
            t.nodes_[y].grad[r * C + c] -
            std::exp(t.nodes_[y].val[r * C + c]) * gsum;
    }
  };
  return y;
}

Tape::Id Tape::quantile_huber_loss(Id pred,
                                   const std::vector<double>& targets) {
  const std::size_t B = nodes_[pred].rows, n = nodes_[pred].cols;
  if (targets.size() != B * n)
    throw std::invalid_argument("Tape::quantile_huber_loss: target size");
  // Uniform fraction grid rho_j = j/n with midpoints (j+0.5)/n; each target
  // column carries probability mass 1/n.
  const double w = 1.0 / static_cast<double>(n);
  auto huber = [](double d) {
    const double ad = std::abs(d);
    return ad <= 1.0 ? 0.5 * d * d : ad - 0.5;
  };
  Id y = push(1, 1);
  double acc = 0.0;
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      const double target = targets[r * n + i];
      for (std::size_t j = 0; j < n; ++j) {
        const double d = target - nodes_[pred].val[r * n + j];
        const double tau_hat = (static_cast<double>(j) + 0.5) * w;
        const double asym = std::abs(tau_hat - (d < 0.0 ? 1.0 : 0.0));
        acc += w * asym * huber(d);
      }
    }
  nodes_[y].val[0] = acc / static_cast<double>(B);
  nodes_[y].back = [pred, y, B, n, w, targets](Tape& t) {
    const double gy = t.nodes_[y].grad[0] / static_cast<double>(B);
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t j = 0; j < n; ++j) {
        const double tau_hat = (static_cast<double>(j) + 0.5) * w;
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d =
              targets[r * n + i] - t.nodes_[pred].val[r * n + j];
          const double asym = std::abs(tau_hat - (d < 0.0 ? 1.0 : 0.0));
          const double dldd = std::abs(d) <= 1.0 ? d : (d < 0.0 ? -1.0 : 1.0);
          g += w * asym * dldd;
        }
        // d/dpred = -d/ddelta
        t.nodes_[pred].grad[r * n + j] -= gy * g;
      }
  };
  return y;
}

void Tape::backward(Id loss) {
  if (nodes_[loss].val.size() != 1)
    throw std::invalid_argument("Tape::backward: loss must be scalar");
  nodes_[loss].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back(*this);
}

std::span<const double> Tape::val(Id id) const { return nodes_[id].val; }
std::span<const double> Tape::grad(Id id) const { return nodes_[id].grad; }
void Tape::clear() { nodes_.clear(); }

Mlp Mlp::init(std::size_t in_dim, std::size_t out_dim,
              std::vector<std::size_t> hidden, Rng& rng) {
  if (in_dim == 0 || out_dim == 0)
    throw std::invalid_argument("Mlp::init: zero dimension");
  Mlp m;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.hidden = std::move(hidden);
  std::vector<std::size_t> sizes = m.layer_sizes();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
    // He initialization for ReLU stacks; biases start at zero.
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_out * fan_in);
    for (double& x : w) x = sd * rng.normal();
    m.W.push_back(std::move(w));
    m.b.emplace_back(fan_out, 0.0);
  }
  return m;
}

std::vector<std::size_t> Mlp::layer_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.push_back(in_dim);
  for (std::size_t h : hidden) sizes.push_back(h);
  sizes.push_back(out_dim);
  return sizes;
}

MlpGraph mlp_forward(Tape& tape, const Mlp& mlp, Tape::Id x) {
  MlpGraph g;
  Tape::Id h = x;
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    const std::size_t out =
        l + 1 < mlp.num_layers() ? mlp.hidden[l] : mlp.out_dim;
    const std::size_t in = tape.cols(h);
    Tape::Id W = tape.leaf(out, in, mlp.W[l]);
    Tape::Id b = tape.leaf(1, out, mlp.b[l]);
    g.w_ids.push_back(W);
    g.b_ids.push_back(b);
    h = tape.linear(W, b, h);
    if (l + 1 < mlp.num_layers()) h = tape.relu(h);
  }
  g.out = h;
  return g;
}

void mlp_forward_values(const Mlp& mlp, std::span<const double> x,
                        std::size_t batch, std::vector<double>& y) {
  if (x.size() != batch * mlp.in_dim)
    throw std::invalid_argument("mlp_forward_values: input size mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  std::size_t in = mlp.in_dim;
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    const std::size_t out =
        l + 1 < mlp.num_layers() ? mlp.hidden[l] : mlp.out_dim;
    next.assign(batch * out, 0.0);
    kernels::linear_forward(mlp.W[l].data(), mlp.b[l].data(), cur.data(),
                            next.data(), batch, in, out);
    if (l + 1 < mlp.num_layers())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur.swap(next);
    in = out;
  }
  y = std::move(cur);
}

Adam::Adam(const Mlp& mlp, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    mW_.emplace_back(mlp.W[l].size(), 0.0);
    vW_.emplace_back(mlp.W[l].size(), 0.0);
    mB_.emplace_back(mlp.b[l].size(), 0.0);
    vB_.emplace_back(mlp.b[l].size(), 0.0);
  }
}

void Adam::apply(std::vector<double>& p, std::span<const double> g,
                 std::vector<double>& m, std::vector<double>& v) {
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
    v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

void Adam::step(Mlp& mlp, const Tape& tape, const MlpGraph& graph) {
  ++t_;
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    apply(mlp.W[l], tape.grad(graph.w_ids[l]), mW_[l], vW_[l]);
    apply(mlp.b[l], tape.grad(graph.b_ids[l]), mB_[l], vB_[l]);
  }
}

void save_checkpoint(const std::string& path, const Mlp& mlp,
                     std::uint64_t seed, std::uint64_t steps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  auto put_u32 = [&f](std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_u32(kCkptMagic);
  std::vector<std::size_t> sizes = mlp.layer_sizes();
  put_u32(static_cast<std::uint32_t>(sizes.size()));
  for (std::size_t s : sizes) put_u32(static_cast<std::uint32_t>(s));
  put_u32(static_cast<std::uint32_t>(mlp.activation));
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    f.write(reinterpret_cast<const char*>(mlp.W[l].data()),
            static_cast<std::streamsize>(mlp.W[l].size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(mlp.b[l].data()),
            static_cast<std::streamsize>(mlp.b[l].size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed " + path);

  jsonio::Writer w;
  w.begin_obj();
  w.key("seed").num_uint(seed);
  w.key("steps").num_uint(steps);
  w.end_obj();
  std::ofstream side(path + ".json", std::ios::binary);
  side << w.out();
  if (!side) throw std::runtime_error("save_checkpoint: sidecar write failed");
}

Mlp load_checkpoint(const std::string& path, std::uint64_t* seed_out,
                    std::uint64_t* steps_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  auto get_u32 = [&f]() {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  if (get_u32() != kCkptMagic)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  const std::uint32_t nsizes = get_u32();
  if (nsizes < 2 || nsizes > 64)
    throw std::runtime_error("load_checkpoint: corrupt header");
  std::vector<std::size_t> sizes(nsizes);
  for (auto& s : sizes) s = get_u32();
  const std::uint32_t act = get_u32();
  if (act != static_cast<std::uint32_t>(Activation::kRelu))
    throw std::runtime_error("load_checkpoint: unknown activation");

  Mlp m;
  m.in_dim = sizes.front();
  m.out_dim = sizes.back();
  m.hidden.assign(sizes.begin() + 1, sizes.end() - 1);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    std::vector<double> w(sizes[l + 1] * sizes[l]);
    std::vector<double> b(sizes[l + 1]);
    f.read(reinterpret_cast<char*>(w.data()),
           static_cast<std::streamsize>(w.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(b.data()),
           static_cast<std::streamsize>(b.size() * sizeof(double)));
    m.W.push_back(std::move(w));
    m.b.push_back(std::move(b));
  }
  if (!f) throw std::runtime_error("load_checkpoint: truncated " + path);

  if (seed_out || steps_out) {
    std::ifstream side(path + ".json");
    if (side) {
      nlohmann::json j = nlohmann::json::parse(side, nullptr, false);
      if (!j.is_discarded()) {
        if (seed_out && j.contains("seed")) *seed_out = j["seed"];
        if (steps_out && j.contains("steps")) *steps_out = j["steps"];
      }
    }
  }
  return m;
}

}  // namespace cfpi
