#include "iatrpo/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "iatrpo/error.hpp"

namespace iatrpo {
namespace {

using envs::kActionDim;

constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct Lane {
  std::size_t episode = 0;
  Rng rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  envs::WorldState world;
  EpisodeResult result;
  std::vector<envs::Observation> obs;  // per agent, valid when active
  std::vector<Vector> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<Vector> other_actions;
};

void start_lane(Lane& lane, std::size_t episode, std::uint64_t seed, const envs::EnvConfig& cfg,
                envs::EnvId env_id, const RolloutOptions& options) {
  lane.episode = episode;
  lane.rng = Rng(seed);
  lane.normal.reset();
  envs::WorldState world = envs::sample_initial(env_id, cfg, lane.rng);
  if (options.mode == RolloutMode::kSingle) {
    world = envs::single_agent_world(world, options.single_role);
  }
  lane.world = std::move(world);
  const std::size_t n = lane.world.size();
  EpisodeTrace& tr = lane.result.trace;
  tr = EpisodeTrace{};
  tr.seed = seed;
  tr.env_id = env_id;
  tr.roles = lane.world.roles;
  tr.goals = lane.world.goals;
  for (const auto& a : lane.world.agents) tr.starts.push_back(a.position());
  tr.positions.assign(n, {});
  tr.outcomes.assign(n, Outcome::kTimeout);
  tr.arrival_step.assign(n, -1);
  lane.result.transitions.assign(n, {});
  lane.obs.assign(n, {});
  lane.actions.assign(n, Vector::Zero(kActionDim));
  lane.log_probs.assign(n, 0.0);
  lane.values.assign(n, 0.0);
  lane.other_actions.assign(n, Vector());
}

void finish_trace(EpisodeTrace& tr, const envs::WorldState& world) {
  tr.length = world.t;
  int best = -1;
  for (std::size_t i = 0; i < world.size(); ++i) {
    const auto& a = world.agents[i];
    tr.outcomes[i] = a.reached ? Outcome::kReached : a.broken ? Outcome::kBroken : Outcome::kTimeout;
    const int step = tr.arrival_step[i];
    if (step < 0) continue;
    if (best < 0 || step < best) {
      best = step;
      tr.first_arrival = i;
      tr.arrival_tie = false;
    } else if (step == best) {
      tr.arrival_tie = true;
    }
  }
}

}  // namespace

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kReached: return "reached";
    case Outcome::kBroken: return "broken";
    case Outcome::kTimeout: return "timeout";
  }
  return "?";
}

bool EpisodeTrace::success() const {
  return !outcomes.empty() && std::all_of(outcomes.begin(), outcomes.end(),
                                          [](Outcome o) { return o == Outcome::kReached; });
}

std::vector<EpisodeResult> run_episodes(const envs::EnvConfig& cfg, envs::EnvId env_id,
                                        std::span<const PolicyHandle> policies,
                                        std::span<const std::uint64_t> seeds,
                                        const RolloutOptions& options) {
  const bool single = options.mode == RolloutMode::kSingle;
  const std::size_t n_agents = single ? 1 : envs::agent_count(env_id);
  if (policies.size() != n_agents) {
    throw ContractError("rollout: " + std::to_string(policies.size()) + " policies for " +
                        std::to_string(n_agents) + " agents");
  }
  require(!single || options.single_role < envs::agent_count(env_id),
          "rollout: single_role out of range");
  for (const auto& p : policies) {
    p.validate();
    if (p.num_agents != n_agents) {
      throw ContractError("rollout: policy built for " + std::to_string(p.num_agents) +
                          " agents used in a world of " + std::to_string(n_agents));
    }
  }
  require(options.lanes >= 1, "rollout: lanes must be >= 1");
  const envs::RewardMode reward_mode = single ? envs::RewardMode::kSingle : envs::RewardMode::kMulti;

  std::vector<EpisodeResult> results(seeds.size());
  std::deque<std::size_t> pending;
  for (std::size_t e = 0; e < seeds.size(); ++e) pending.push_back(e);
  std::vector<Lane> lanes;
  lanes.reserve(options.lanes);

  std::vector<const envs::Observation*> obs_ptrs;
  std::vector<const Vector*> act_ptrs;
  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (lane, agent)
  std::vector<Vector> joint(n_agents);

  while (!pending.empty() || !lanes.empty()) {
    while (lanes.size() < options.lanes && !pending.empty()) {
      lanes.emplace_back();
      const std::size_t e = pending.front();
      pending.pop_front();
      start_lane(lanes.back(), e, seeds[e], cfg, env_id, options);
    }

    for (Lane& lane : lanes) {
      for (std::size_t i = 0; i < n_agents; ++i) {
        if (!lane.world.agents[i].terminal()) lane.obs[i] = envs::observe(lane.world, i, cfg, lane.rng);
      }
    }

    for (std::size_t i = 0; i < n_agents; ++i) {
      obs_ptrs.clear();
      slots.clear();
      for (std::size_t l = 0; l < lanes.size(); ++l) {
        if (lanes[l].world.agents[i].terminal()) continue;
        obs_ptrs.push_back(&lanes[l].obs[i]);
        slots.emplace_back(l, i);
      }
      if (obs_ptrs.empty()) continue;
      const Matrix means = policy_means(policies[i], obs_ptrs);
      const Vector& log_std = policies[i].log_std();
      const Vector std_dev = log_std.array().exp();
      const double lp_const = -log_std.sum() - static_cast<double>(kActionDim) * kHalfLog2Pi;
      for (std::size_t k = 0; k < slots.size(); ++k) {
        Lane& lane = lanes[slots[k].first];
        Vector a = means.col(static_cast<Eigen::Index>(k));
        double sq = 0.0;
        if (!options.deterministic) {
          for (Eigen::Index d = 0; d < a.size(); ++d) {
            const double z = lane.normal(lane.rng);
            a[d] += std_dev[d] * z;
            sq += z * z;
          }
        }
        lane.actions[i] = std::move(a);
        lane.log_probs[i] = -0.5 * sq + lp_const;
      }
    }

    if (options.record_transitions) {
      for (std::size_t i = 0; i < n_agents; ++i) {
        const PolicyHandle& h = policies[i];
        obs_ptrs.clear();
        act_ptrs.clear();
        slots.clear();
        for (std::size_t l = 0; l < lanes.size(); ++l) {
          Lane& lane = lanes[l];
          if (lane.world.agents[i].terminal()) continue;
          if (h.kind == PolicyKind::kMatrpo) {
            Vector others(static_cast<Eigen::Index>(kActionDim * (n_agents - 1)));
            Eigen::Index row = 0;
            for (std::size_t j = 0; j < n_agents; ++j) {
              if (j == i) continue;
              others.segment(row, kActionDim) = lane.world.agents[j].terminal()
                                                     ? Vector::Zero(kActionDim)
                                                     : lane.actions[j];
              row += kActionDim;
            }
            lane.other_actions[i] = std::move(others);
          }
          obs_ptrs.push_back(&lane.obs[i]);
          act_ptrs.push_back(&lane.other_actions[i]);
          slots.emplace_back(l, i);
        }
        if (obs_ptrs.empty()) continue;
        const Vector values = policy_values(h, obs_ptrs, act_ptrs);
        for (std::size_t k = 0; k < slots.size(); ++k) {
          lanes[slots[k].first].values[i] = values[static_cast<Eigen::Index>(k)];
        }
      }
    }

    for (std::size_t l = 0; l < lanes.size();) {
      Lane& lane = lanes[l];
      for (std::size_t i = 0; i < n_agents; ++i) {
        joint[i] = lane.world.agents[i].terminal() ? Vector::Zero(kActionDim) : lane.actions[i];
      }
      envs::StepOutcome out = envs::env_step(lane.world, joint, cfg, lane.rng, reward_mode);
      EpisodeTrace& tr = lane.result.trace;
      StepRecord record;
      if (options.record_steps) {
        record.t = out.world.t;
        record.agents = out.world.agents;
        record.actions = joint;
        record.rewards = out.rewards;
        record.active.assign(n_agents, false);
      }
      for (std::size_t i = 0; i < n_agents; ++i) {
        if (lane.world.agents[i].terminal()) continue;
        const envs::AgentState& now = out.world.agents[i];
        tr.positions[i].push_back(now.position());
        if (now.reached) tr.arrival_step[i] = out.world.t;
        if (options.record_steps) record.active[i] = true;
        if (options.record_transitions) {
          Transition t;
          t.observation = std::move(lane.obs[i]);
          t.other_actions = std::move(lane.other_actions[i]);
          t.action = lane.actions[i];
          t.log_prob = lane.log_probs[i];
          t.reward = out.rewards[i];
          t.value_estimate = lane.values[i];
          t.done = out.dones[i];
          t.agent = i;
          t.episode = lane.episode;
          lane.result.transitions[i].push_back(std::move(t));
        }
      }
      if (options.record_steps) tr.steps.push_back(std::move(record));
      lane.world = std::move(out.world);
      if (out.world_done) {
        finish_trace(tr, lane.world);
        results[lane.episode] = std::move(lane.result);
        lanes.erase(lanes.begin() + static_cast<std::ptrdiff_t>(l));
      } else {
        ++l;
      }
    }
  }
  return results;
}

std::uint64_t rollout_episode_seed(std::uint64_t seed, std::uint64_t iteration,
                                   std::uint64_t episode) {
  return derive_seed(seed, {stream_id(Stream::kRollout), iteration, episode});
}

RolloutBatch rollout(const envs::EnvConfig& cfg, envs::EnvId env_id,
                     std::span<const PolicyHandle> policies, std::size_t n_timesteps,
                     std::uint64_t seed, std::uint64_t iteration, const RolloutOptions& options) {
  require(n_timesteps >= 1, "rollout: n_timesteps must be >= 1");
  const std::size_t n_agents =
      options.mode == RolloutMode::kSingle ? 1 : envs::agent_count(env_id);
  RolloutBatch batch;
  batch.per_agent.assign(n_agents, {});
  std::size_t next_episode = 0;
  double mean_length = static_cast<double>(cfg.geometry.horizon);
  while (batch.timesteps < n_timesteps) {
    const double remaining = static_cast<double>(n_timesteps - batch.timesteps);
    const auto wanted = static_cast<std::size_t>(std::ceil(remaining / std::max(mean_length, 1.0)));
    const std::size_t wave = std::clamp<std::size_t>(wanted, 1, options.lanes);
    std::vector<std::uint64_t> seeds(wave);
    for (std::size_t k = 0; k < wave; ++k) {
      seeds[k] = rollout_episode_seed(seed, iteration, next_episode + k);
    }
    std::vector<EpisodeResult> results = run_episodes(cfg, env_id, policies, seeds, options);
    std::size_t used_steps = 0;
    std::size_t used = 0;
    for (EpisodeResult& r : results) {
      if (batch.timesteps >= n_timesteps) break;
      batch.timesteps += static_cast<std::size_t>(r.trace.length);
      used_steps += static_cast<std::size_t>(r.trace.length);
      ++used;
      for (std::size_t i = 0; i < n_agents; ++i) {
        auto& dst = batch.per_agent[i];
        for (Transition& t : r.transitions[i]) {
          t.episode = next_episode + (&r - results.data());
          dst.push_back(std::move(t));
        }
      }
      batch.traces.push_back(std::move(r.trace));
    }
    next_episode += wave;
    mean_length = static_cast<double>(used_steps) / static_cast<double>(std::max<std::size_t>(used, 1));
  }
  return batch;
}

}  // namespace iatrpo
