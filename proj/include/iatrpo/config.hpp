#pragma once

// Run configuration read from a JSON document with four sections: env,
// trpo, curriculum and eval. Missing keys take their defaults, unknown keys
// are rejected. The config hash is the SHA-256 of the canonical dump.

#include <cstddef>
#include <string>
#include <string_view>

#include "iatrpo/envs.hpp"
#include "iatrpo/trainer.hpp"

namespace iatrpo {

struct EvalConfig {
  int n_episodes = 1000;
  bool deterministic = true;
  int n_pairs = 20;
  int frechet_episodes = 1000;
  int render_episodes = 4;
};

struct RunConfig {
  envs::EnvConfig env;
  CurriculumConfig curriculum;  // carries env id, seed and trpo settings
  EvalConfig eval;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);  // empty path gives defaults

// Every field, keys sorted, numbers in shortest round-trip form.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

}  // namespace iatrpo
