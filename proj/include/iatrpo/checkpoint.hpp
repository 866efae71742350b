#pragma once

// Self-describing binary checkpoints; the layout is documented in
// docs/checkpoint-format.md.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "iatrpo/envs.hpp"
#include "iatrpo/policy.hpp"

namespace iatrpo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int iteration = 0;
  std::string config_hash;
  envs::EnvId env_id = envs::EnvId::kC2Fixed;
  std::size_t role = 0;
  std::string stage;  // "single", "iatrpo" or "matrpo"

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  PolicyHandle policy;
  CheckpointMeta meta;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
// Throws IoError on a bad magic, version or checksum and on truncation.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::string& path, const std::string& data);
std::string read_file(const std::string& path);

}  // namespace iatrpo
