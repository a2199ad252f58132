#include "cfpi/dataset.hpp"

#include <cstring>
#include <fstream>

#include "cfpi/rng.hpp"

namespace cfpi {

namespace {

constexpr char kMagic[5] = {'C', 'F', 'P', 'I', '1'};

void append_f32(std::vector<float>& out, const std::vector<double>& xs) {
  for (double x : xs) out.push_back(static_cast<float>(x));
}

std::vector<float> payload_f32(const Dataset& d) {
  std::vector<float> p;
  p.reserve(d.states.size() + d.actions.size() + d.rewards.size() +
            d.next_states.size() + d.next_actions.size() + d.dones.size());
  append_f32(p, d.states);
  append_f32(p, d.actions);
  append_f32(p, d.rewards);
  append_f32(p, d.next_states);
  append_f32(p, d.next_actions);
  append_f32(p, d.dones);
  return p;
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = rewards.size();
  if (state_dim == 0 || action_dim == 0)
    throw DatasetError("dataset: zero dimension");
  if (states.size() != n * state_dim || next_states.size() != n * state_dim ||
      actions.size() != n * action_dim ||
      next_actions.size() != n * action_dim || dones.size() != n)
    throw DatasetError("dataset: field size mismatch");
  for (double f : dones)
    if (f != 0.0 && f != 1.0) throw DatasetError("dataset: done not 0/1");
}

std::uint64_t dataset_payload_hash(const Dataset& d) {
  std::vector<float> p = payload_f32(d);
  return fnv1a64(p.data(), p.size() * sizeof(float));
}

void save_dataset(const std::string& path, const Dataset& d) {
  d.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DatasetError("save_dataset: cannot open " + path);
  f.write(kMagic, sizeof kMagic);
  const std::uint32_t sd = static_cast<std::uint32_t>(d.state_dim);
  const std::uint32_t ad = static_cast<std::uint32_t>(d.action_dim);
  const std::uint64_t n = d.size();
  f.write(reinterpret_cast<const char*>(&sd), sizeof sd);
  f.write(reinterpret_cast<const char*>(&ad), sizeof ad);
  f.write(reinterpret_cast<const char*>(&n), sizeof n);
  const std::uint32_t mlen = static_cast<std::uint32_t>(d.metadata_json.size());
  f.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
  f.write(d.metadata_json.data(), mlen);

  std::vector<float> p = payload_f32(d);
  f.write(reinterpret_cast<const char*>(p.data()),
          static_cast<std::streamsize>(p.size() * sizeof(float)));
  const std::uint64_t hash = fnv1a64(p.data(), p.size() * sizeof(float));
  f.write(reinterpret_cast<const char*>(&hash), sizeof hash);
  if (!f) throw DatasetError("save_dataset: write failed " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DatasetError("load_dataset: cannot open " + path);
  char magic[5];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DatasetError("load_dataset: bad magic in " + path);

  std::uint32_t sd = 0, ad = 0, mlen = 0;
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&sd), sizeof sd);
  f.read(reinterpret_cast<char*>(&ad), sizeof ad);
  f.read(reinterpret_cast<char*>(&n), sizeof n);
  f.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
  if (!f || sd == 0 || ad == 0)
    throw DatasetError("load_dataset: corrupt header in " + path);

  Dataset d;
  d.state_dim = sd;
  d.action_dim = ad;
  d.metadata_json.resize(mlen);
  f.read(d.metadata_json.data(), mlen);

  const std::size_t total = n * (2 * sd + 2 * ad + 2);
  std::vector<float> p(total);
  f.read(reinterpret_cast<char*>(p.data()),
         static_cast<std::streamsize>(total * sizeof(float)));
  std::uint64_t stored = 0;
  f.read(reinterpret_cast<char*>(&stored), sizeof stored);
  if (!f) throw DatasetError("load_dataset: truncated file " + path);
  if (fnv1a64(p.data(), p.size() * sizeof(float)) != stored)
    throw DatasetError("load_dataset: payload hash mismatch in " + path);

  auto take = [&p](std::size_t& off, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
      out[i] = static_cast<double>(p[off + i]);
    off += count;
    return out;
  };
  std::size_t off = 0;
  d.states = take(off, n * sd);
  d.actions = take(off, n * ad);
  d.rewards = take(off, n);
  d.next_states = take(off, n * sd);
  d.next_actions = take(off, n * ad);
  d.dones = take(off, n);
  d.validate();
  return d;
}

}  // namespace cfpi
