#pragma once

// Episode collection. Episodes run in lockstep "lanes" so that every policy
// evaluation is one batched forward pass, but each episode owns a private
// generator seeded from (master seed, iteration, episode index): the results
// do not depend on how many lanes run side by side.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "iatrpo/envs.hpp"
#include "iatrpo/policy.hpp"

namespace iatrpo {

enum class RolloutMode { kSingle, kMulti };

struct Transition {
  envs::Observation observation;  // own state, goal and (multi mode) others
  Vector other_actions;           // others' current actions; MATRPO only
  Vector action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value_estimate = 0.0;
  bool done = false;
  std::size_t agent = 0;  // provenance: index of the acting agent
  std::size_t episode = 0;
};

enum class Outcome { kReached, kBroken, kTimeout };

const char* to_string(Outcome o);

struct StepRecord {
  int t = 0;
  std::vector<envs::AgentState> agents;  // after the step
  std::vector<Vector> actions;           // policy actions, before noise
  std::vector<double> rewards;
  std::vector<bool> active;              // agent acted this step
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  envs::EnvId env_id = envs::EnvId::kC2Fixed;
  std::vector<std::size_t> roles;
  std::vector<envs::Point> goals;
  std::vector<envs::Point> starts;
  // Post-step positions of each agent while it was acting.
  std::vector<std::vector<envs::Point>> positions;
  std::vector<Outcome> outcomes;
  std::vector<int> arrival_step;  // step index of reaching, -1 otherwise
  // Earliest arriving agent; with a tie on the earliest step the lowest
  // index is stored and arrival_tie is set.
  std::optional<std::size_t> first_arrival;
  bool arrival_tie = false;
  int length = 0;  // world steps
  std::vector<StepRecord> steps;  // filled only when requested

  std::size_t num_agents() const { return outcomes.size(); }
  bool success() const;
};

struct RolloutOptions {
  RolloutMode mode = RolloutMode::kMulti;
  std::size_t single_role = 0;  // role simulated in single mode
  bool deterministic = false;   // act with the policy mean
  bool record_transitions = true;
  bool record_steps = false;
  std::size_t lanes = 32;
};

struct EpisodeResult {
  EpisodeTrace trace;
  std::vector<std::vector<Transition>> transitions;  // per agent
};

// Runs one episode per seed. In single mode exactly one policy drives role
// `single_role` of the world sampled from the seed (so it starts from the
// same initial condition as the multi-agent episode with that seed).
std::vector<EpisodeResult> run_episodes(const envs::EnvConfig& cfg, envs::EnvId env_id,
                                        std::span<const PolicyHandle> policies,
                                        std::span<const std::uint64_t> seeds,
                                        const RolloutOptions& options);

struct RolloutBatch {
  std::vector<std::vector<Transition>> per_agent;
  std::vector<EpisodeTrace> traces;
  std::size_t timesteps = 0;  // world steps
};

std::uint64_t rollout_episode_seed(std::uint64_t seed, std::uint64_t iteration,
                                   std::uint64_t episode);

// Collects whole episodes, in episode-index order, until at least
// n_timesteps world steps have been gathered.
RolloutBatch rollout(const envs::EnvConfig& cfg, envs::EnvId env_id,
                     std::span<const PolicyHandle> policies, std::size_t n_timesteps,
                     std::uint64_t seed, std::uint64_t iteration,
                     const RolloutOptions& options);

}  // namespace iatrpo
