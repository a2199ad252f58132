#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfpi {

// Raised for malformed/corrupt dataset files; the CLI maps it to exit code 2.
class DatasetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Offline transition set in struct-of-arrays layout (row-major per field).
// Values are held as doubles in memory; the on-disk payload is f32.
// Terminal transitions (done=1) carry an all-zero next_action and their
// bootstrap term is dropped by training code.
struct Dataset {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;        // n x state_dim
  std::vector<double> actions;       // n x action_dim
  std::vector<double> rewards;       // n
  std::vector<double> next_states;   // n x state_dim
  std::vector<double> next_actions;  // n x action_dim
  std::vector<double> dones;         // n, each 0.0 or 1.0
  std::string metadata_json;         // generator provenance

  std::size_t size() const { return rewards.size(); }

  std::span<const double> state(std::size_t i) const {
    return {states.data() + i * state_dim, state_dim};
  }
  std::span<const double> action(std::size_t i) const {
    return {actions.data() + i * action_dim, action_dim};
  }
  std::span<const double> next_state(std::size_t i) const {
    return {next_states.data() + i * state_dim, state_dim};
  }
  std::span<const double> next_action(std::size_t i) const {
    return {next_actions.data() + i * action_dim, action_dim};
  }

  // Throws DatasetError when field sizes disagree or dones are not 0/1.
  void validate() const;
};

// Binary dataset file:
//   magic "CFPI1" (5 bytes)
//   u32 state_dim, u32 action_dim, u64 count
//   u32 metadata length, metadata JSON bytes
//   payload: f32 little-endian blocks in field order
//     states | actions | rewards | next_states | next_actions | dones
//   u64 FNV-1a hash of the payload bytes (trailer, verified on load)
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

// Hash of the f32 payload as it would appear on disk.
std::uint64_t dataset_payload_hash(const Dataset& data);

}  // namespace cfpi
