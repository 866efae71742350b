#pragma once

// Two-stage curriculum and the MATRPO baseline.
//
// Stage 1 trains one goal-conditioned single-agent policy per role with the
// other agents absent. Stage 2 wraps each frozen stage-1 policy with a
// modifier and trains all modifiers simultaneously in the multi-agent
// environment, each agent updating only from its own transitions. MATRPO
// trains observation-conditioned actors with action-augmented critics from
// scratch on the same schedule.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iatrpo/envs.hpp"
#include "iatrpo/policy.hpp"
#include "iatrpo/rollout.hpp"
#include "iatrpo/trpo.hpp"

namespace iatrpo {

struct CurriculumConfig {
  envs::EnvId env_id = envs::EnvId::kC2Fixed;
  int stage1_iterations = 500;
  int stage2_iterations = 1000;
  std::uint64_t seed = 0;
  trpo::TrpoConfig trpo;
  bool modifier_uses_goal = false;
  // Stop once the probe success is >= early_stop_success for
  // early_stop_window consecutive iterations; a window of 0 disables it.
  double early_stop_success = 0.98;
  int early_stop_window = 20;
  int probe_episodes = 100;
  int rollout_lanes = 32;
  std::vector<std::size_t> hidden = {128, 128};

  void validate() const;
  NetworkShape shape() const { return NetworkShape{hidden}; }
};

struct IterationMetrics {
  int iteration = 0;
  std::size_t agent = 0;
  double mean_episode_length = 0.0;  // this agent's steps per episode
  double success_probe = 0.0;        // this agent reached its goal
  double joint_success_probe = 0.0;  // every agent reached its goal
  double mean_return = 0.0;
  trpo::StepReport step;
  double entropy = 0.0;
};

struct TrainingRun {
  std::vector<PolicyHandle> policies;  // one per agent role
  std::vector<std::vector<IterationMetrics>> metrics;  // per agent role
  std::vector<int> iterations;  // iterations run, per role
  bool early_stopped = false;
};

struct TrainOptions {
  std::ostream* log = nullptr;
  int log_every = 10;
};

// Probe success rates of fixed, mean-action probe episodes.
struct ProbeResult {
  std::vector<double> agent_success;
  double joint_success = 0.0;
};

ProbeResult probe(const envs::EnvConfig& env, envs::EnvId env_id,
                  std::span<const PolicyHandle> policies, RolloutMode mode,
                  std::size_t single_role, int episodes, std::uint64_t seed,
                  std::size_t lanes);

// One decentralized update of `handle` from its own transitions (all tagged
// with `agent`): GAE, TRPO step on the trainable actor and log-std, and
// value regression on the trainable critic.
trpo::StepReport update_agent(PolicyHandle& handle, std::size_t agent,
                              const std::vector<Transition>& transitions,
                              const trpo::TrpoConfig& cfg, Rng& value_rng);

TrainingRun train_single(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                         const TrainOptions& options = {});

TrainingRun train_iatrpo(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                         const std::vector<PolicyHandle>& single_policies,
                         const TrainOptions& options = {});

TrainingRun train_matrpo(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                         const TrainOptions& options = {});

}  // namespace iatrpo
