#pragma once

// Policy handles for the three agent architectures:
//
//   SingleAgent  mean = actor(own, goal)
//   Composed     mean = frozen_actor(own, goal) + modifier_actor(own, others)
//                value = frozen_critic(own, goal) + modifier_critic(own, others)
//   Matrpo       mean = actor(own, goal, others)
//                value = critic(own, goal, others, others' actions)
//
// `net` always holds the trainable actor and critic; for Composed those are
// the modifier networks and `frozen_single` is never written by any update.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iatrpo/envs.hpp"
#include "iatrpo/nnet.hpp"
#include "iatrpo/rng.hpp"

namespace iatrpo {

using nnet::GaussianAction;
using nnet::Matrix;
using nnet::ParameterVector;
using nnet::Vector;

enum class PolicyKind { kSingleAgent, kComposed, kMatrpo };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

struct ActorCritic {
  ParameterVector actor;  // carries the log-std
  ParameterVector critic;
};

struct PolicyHandle {
  PolicyKind kind = PolicyKind::kSingleAgent;
  ActorCritic net;
  std::optional<ActorCritic> frozen_single;
  std::size_t num_agents = 1;
  bool modifier_uses_goal = false;

  const Vector& log_std() const { return net.actor.log_std; }
  std::size_t num_others() const { return num_agents - 1; }
  void validate() const;
};

struct NetworkShape {
  std::vector<std::size_t> hidden = {128, 128};
};

PolicyHandle make_single_policy(Rng& rng, const NetworkShape& shape = {});
// Stage-2 handle around a trained single-agent policy. The modifier's output
// layers start at 1% scale and its log-std at the single policy's value.
PolicyHandle make_composed_policy(const PolicyHandle& single, std::size_t num_agents,
                                  bool modifier_uses_goal, Rng& rng,
                                  const NetworkShape& shape = {});
PolicyHandle make_matrpo_policy(std::size_t num_agents, Rng& rng,
                                const NetworkShape& shape = {});

// Input feature layouts.
std::size_t actor_input_dim(PolicyKind kind, std::size_t num_agents, bool modifier_uses_goal);
std::size_t critic_input_dim(PolicyKind kind, std::size_t num_agents, bool modifier_uses_goal);

// Batched feature matrices, one column per observation.
Matrix actor_inputs(const PolicyHandle& h, std::span<const envs::Observation* const> obs);
Matrix critic_inputs(const PolicyHandle& h, std::span<const envs::Observation* const> obs,
                     std::span<const Vector* const> other_actions);
// Frozen single-agent contributions (zeros unless Composed).
Matrix mean_offsets(const PolicyHandle& h, std::span<const envs::Observation* const> obs);
Vector value_offsets(const PolicyHandle& h, std::span<const envs::Observation* const> obs);

// Action means (action_dim x n) and values (n), each column independent of
// the rest of the batch.
Matrix policy_means(const PolicyHandle& h, std::span<const envs::Observation* const> obs);
Vector policy_values(const PolicyHandle& h, std::span<const envs::Observation* const> obs,
                     std::span<const Vector* const> other_actions);

GaussianAction act_single(const PolicyHandle& h, const envs::Observation& obs);
GaussianAction act_composed(const PolicyHandle& h, const envs::Observation& obs);
GaussianAction act_matrpo(const PolicyHandle& h, const envs::Observation& obs);
double value_matrpo(const PolicyHandle& h, const envs::Observation& obs,
                    std::span<const Vector> other_actions);
// Dispatch on kind.
GaussianAction act(const PolicyHandle& h, const envs::Observation& obs);

// SHA-256 over the frozen single-agent parameters, hex encoded. Empty when
// the handle has no frozen part.
std::string frozen_fingerprint(const PolicyHandle& h);

}  // namespace iatrpo
