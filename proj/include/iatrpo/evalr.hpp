#pragma once

// Evaluation protocols: success rate, first-arrival shares, Frechet
// compromise and mixed cross-seed pairings. Evaluation episodes use the
// policy mean unless told otherwise.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "iatrpo/envs.hpp"
#include "iatrpo/policy.hpp"
#include "iatrpo/rollout.hpp"

namespace iatrpo::evalr {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(std::span<const double> xs);

struct EvalOptions {
  bool deterministic = true;
  bool record_steps = false;
  std::size_t lanes = 32;
};

// Episode e of an evaluation with master seed s starts from the world drawn
// with eval_episode_seed(s, e).
std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t episode);
std::vector<std::uint64_t> eval_seeds(std::uint64_t seed, std::size_t n_episodes);

struct SuccessResult {
  double rate = 0.0;                // every agent reached
  std::vector<double> agent_rate;   // per agent
  std::vector<EpisodeTrace> traces;
};

SuccessResult success_rate(const envs::EnvConfig& env, envs::EnvId env_id,
                           std::span<const PolicyHandle> policies, std::size_t n_episodes,
                           std::uint64_t seed, const EvalOptions& options = {});

struct FirstArrivalStats {
  std::vector<std::vector<double>> per_group;  // [group][agent], percent
  std::vector<MeanStd> share;                  // per agent, over groups
  std::size_t ties = 0;
  std::size_t no_arrival = 0;
};

// Ties on the earliest step and episodes where nobody arrived count for no
// agent, so shares in a group sum to at most 100.
FirstArrivalStats first_arrival_stats(const std::vector<std::vector<EpisodeTrace>>& groups,
                                      std::size_t n_agents);

double discrete_frechet(std::span<const envs::Point> p, std::span<const envs::Point> q);

struct CompromiseResult {
  std::vector<double> mean_frechet;  // per agent
  std::vector<double> percent;       // per agent, sums to 100
  bool degenerate = false;           // all distances zero; uniform split reported
  std::vector<EpisodeTrace> multi_traces;
  std::vector<std::vector<EpisodeTrace>> single_traces;  // [agent][episode]
};

// Start point followed by the post-step positions of `agent`.
std::vector<envs::Point> agent_path(const EpisodeTrace& trace, std::size_t agent);

CompromiseResult compromise_analysis(const envs::EnvConfig& env, envs::EnvId env_id,
                                     std::span<const PolicyHandle> singles,
                                     std::span<const PolicyHandle> composed,
                                     std::size_t n_episodes, std::uint64_t seed,
                                     const EvalOptions& options = {});

struct Pairing {
  std::vector<std::size_t> seed_index;  // per role: which seed's policy plays it
  double success = 0.0;
};

struct MixedResult {
  std::vector<Pairing> pairings;
  MeanStd success;
};

// Ordered role assignments with distinct seeds per role. Two roles: all of
// them in lexicographic order, truncated to n_pairs. More roles: the
// lexicographic list shuffled by a generator seeded from `seed`, then
// truncated.
std::vector<std::vector<std::size_t>> enumerate_pairings(std::size_t n_seeds, std::size_t n_roles,
                                                         std::size_t n_pairs, std::uint64_t seed);

// by_seed[s][r] is the policy of role r trained with seed index s.
MixedResult mixed_pairing_eval(const envs::EnvConfig& env, envs::EnvId env_id,
                               const std::vector<std::vector<PolicyHandle>>& by_seed,
                               std::size_t n_pairs, std::size_t n_episodes, std::uint64_t seed,
                               const EvalOptions& options = {});

// First index whose value exceeds `threshold` with every later value also
// above it.
std::optional<std::size_t> convergence_iteration(std::span<const double> success,
                                                 double threshold = 0.9);

}  // namespace iatrpo::evalr
