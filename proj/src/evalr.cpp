#include "iatrpo/evalr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iatrpo/error.hpp"

namespace iatrpo::evalr {
namespace {

RolloutOptions rollout_options(RolloutMode mode, const EvalOptions& options) {
  RolloutOptions ro;
  ro.mode = mode;
  ro.deterministic = options.deterministic;
  ro.record_transitions = false;
  ro.record_steps = options.record_steps;
  ro.lanes = options.lanes;
  return ro;
}

}  // namespace

MeanStd mean_std(std::span<const double> xs) {
  require(!xs.empty(), "mean_std of an empty sample");
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t episode) {
  return derive_seed(seed, {stream_id(Stream::kEval), episode});
}

std::vector<std::uint64_t> eval_seeds(std::uint64_t seed, std::size_t n_episodes) {
  std::vector<std::uint64_t> out(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) out[e] = eval_episode_seed(seed, e);
  return out;
}

SuccessResult success_rate(const envs::EnvConfig& env, envs::EnvId env_id,
                           std::span<const PolicyHandle> policies, std::size_t n_episodes,
                           std::uint64_t seed, const EvalOptions& options) {
  require(n_episodes >= 1, "success_rate: n_episodes must be >= 1");
  const auto seeds = eval_seeds(seed, n_episodes);
  auto results = run_episodes(env, env_id, policies, seeds,
                              rollout_options(RolloutMode::kMulti, options));
  SuccessResult out;
  out.agent_rate.assign(policies.size(), 0.0);
  std::size_t wins = 0;
  for (auto& r : results) {
    for (std::size_t i = 0; i < policies.size(); ++i) {
      if (r.trace.outcomes[i] == Outcome::kReached) out.agent_rate[i] += 1.0;
    }
    if (r.trace.success()) ++wins;
    out.traces.push_back(std::move(r.trace));
  }
  const double n = static_cast<double>(n_episodes);
  out.rate = static_cast<double>(wins) / n;
  for (auto& a : out.agent_rate) a /= n;
  return out;
}

FirstArrivalStats first_arrival_stats(const std::vector<std::vector<EpisodeTrace>>& groups,
                                      std::size_t n_agents) {
  require(!groups.empty(), "first_arrival_stats: no seed groups");
  require(n_agents >= 1, "first_arrival_stats: n_agents must be >= 1");
  FirstArrivalStats out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    if (group.empty()) {
      throw ContractError("first_arrival_stats: seed group " + std::to_string(g) + " is empty");
    }
    std::vector<double> counts(n_agents, 0.0);
    for (const auto& tr : group) {
      if (tr.num_agents() != n_agents) {
        throw ContractError("first_arrival_stats: trace with " + std::to_string(tr.num_agents()) +
                            " agents, expected " + std::to_string(n_agents));
      }
      if (!tr.first_arrival) {
        ++out.no_arrival;
      } else if (tr.arrival_tie) {
        ++out.ties;
      } else {
        counts[*tr.first_arrival] += 1.0;
      }
    }
    for (auto& c : counts) c = 100.0 * c / static_cast<double>(group.size());
    out.per_group.push_back(std::move(counts));
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    std::vector<double> xs;
    for (const auto& row : out.per_group) xs.push_back(row[i]);
    out.share.push_back(mean_std(xs));
  }
  return out;
}

double discrete_frechet(std::span<const envs::Point> p, std::span<const envs::Point> q) {
  require(!p.empty() && !q.empty(), "discrete_frechet: empty sequence");
  const std::size_t m = q.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = envs::distance(p[i], q[j]);
      double best;
      if (i == 0 && j == 0) {
        best = d;
      } else if (i == 0) {
        best = std::max(d, cur[j - 1]);
      } else if (j == 0) {
        best = std::max(d, prev[j]);
      } else {
        best = std::max(d, std::min({prev[j], cur[j - 1], prev[j - 1]}));
      }
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

std::vector<envs::Point> agent_path(const EpisodeTrace& trace, std::size_t agent) {
  require(agent < trace.num_agents(), "agent_path: agent index out of range");
  std::vector<envs::Point> out;
  out.reserve(trace.positions[agent].size() + 1);
  out.push_back(trace.starts[agent]);
  out.insert(out.end(), trace.positions[agent].begin(), trace.positions[agent].end());
  return out;
}

CompromiseResult compromise_analysis(const envs::EnvConfig& env, envs::EnvId env_id,
                                     std::span<const PolicyHandle> singles,
                                     std::span<const PolicyHandle> composed,
                                     std::size_t n_episodes, std::uint64_t seed,
                                     const EvalOptions& options) {
  require(n_episodes >= 1, "compromise_analysis: n_episodes must be >= 1");
  const std::size_t n = envs::agent_count(env_id);
  if (singles.size() != n || composed.size() != n) {
    throw ContractError("compromise_analysis: expected " + std::to_string(n) +
                        " single and composed policies");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = composed[i];
    if (singles[i].kind != PolicyKind::kSingleAgent || c.kind != PolicyKind::kComposed ||
        !c.frozen_single || c.frozen_single->actor.values != singles[i].net.actor.values ||
        c.frozen_single->actor.log_std.size() != singles[i].net.actor.log_std.size()) {
      throw ContractError("compromise_analysis: composed policy " + std::to_string(i) +
                          " does not wrap the given single-agent policy");
    }
  }
  const auto seeds = eval_seeds(seed, n_episodes);
  CompromiseResult out;
  auto multi = run_episodes(env, env_id, composed, seeds,
                            rollout_options(RolloutMode::kMulti, options));
  for (auto& r : multi) out.multi_traces.push_back(std::move(r.trace));
  out.mean_frechet.assign(n, 0.0);
  out.single_traces.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    RolloutOptions ro = rollout_options(RolloutMode::kSingle, options);
    ro.single_role = i;
    std::span<const PolicyHandle> one(&singles[i], 1);
    auto alone = run_episodes(env, env_id, one, seeds, ro);
    for (std::size_t e = 0; e < n_episodes; ++e) {
      const auto a = agent_path(alone[e].trace, 0);
      const auto b = agent_path(out.multi_traces[e], i);
      out.mean_frechet[i] += discrete_frechet(a, b);
      out.single_traces[i].push_back(std::move(alone[e].trace));
    }
    out.mean_frechet[i] /= static_cast<double>(n_episodes);
  }
  const double total = std::accumulate(out.mean_frechet.begin(), out.mean_frechet.end(), 0.0);
  out.degenerate = !(total > 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.percent.push_back(out.degenerate ? 100.0 / static_cast<double>(n)
                                         : 100.0 * out.mean_frechet[i] / total);
  }
  return out;
}

std::vector<std::vector<std::size_t>> enumerate_pairings(std::size_t n_seeds, std::size_t n_roles,
                                                         std::size_t n_pairs, std::uint64_t seed) {
  require(n_roles >= 2, "mixed pairing needs at least 2 roles");
  if (n_seeds < n_roles) {
    throw ContractError("mixed pairing: " + std::to_string(n_seeds) + " seeds cannot fill " +
                        std::to_string(n_roles) + " roles with distinct seeds");
  }
  std::vector<std::vector<std::size_t>> all;
  std::vector<std::size_t> cur(n_roles, 0);
  auto rec = [&](auto&& self, std::size_t r) -> void {
    if (r == n_roles) {
      all.push_back(cur);
      return;
    }
    for (std::size_t s = 0; s < n_seeds; ++s) {
      if (std::find(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(r), s) !=
          cur.begin() + static_cast<std::ptrdiff_t>(r)) {
        continue;
      }
      cur[r] = s;
      self(self, r + 1);
    }
  };
  rec(rec, 0);
  if (n_roles > 2) {
    Rng rng = make_rng(seed, {stream_id(Stream::kPairing)});
    for (std::size_t k = all.size(); k > 1; --k) {
      std::uniform_int_distribution<std::size_t> pick(0, k - 1);
      std::swap(all[k - 1], all[pick(rng)]);
    }
  }
  if (all.size() > n_pairs) all.resize(n_pairs);
  return all;
}

MixedResult mixed_pairing_eval(const envs::EnvConfig& env, envs::EnvId env_id,
                               const std::vector<std::vector<PolicyHandle>>& by_seed,
                               std::size_t n_pairs, std::size_t n_episodes, std::uint64_t seed,
                               const EvalOptions& options) {
  require(by_seed.size() >= 2, "mixed_pairing_eval: needs at least 2 seeds");
  const std::size_t n = envs::agent_count(env_id);
  for (const auto& roster : by_seed) {
    require(roster.size() == n, "mixed_pairing_eval: every seed needs one policy per role");
  }
  MixedResult out;
  std::vector<double> rates;
  for (const auto& idx : enumerate_pairings(by_seed.size(), n, n_pairs, seed)) {
    std::vector<PolicyHandle> team;
    for (std::size_t r = 0; r < n; ++r) team.push_back(by_seed[idx[r]][r]);
    const double rate = success_rate(env, env_id, team, n_episodes, seed, options).rate;
    out.pairings.push_back({idx, rate});
    rates.push_back(rate);
  }
  out.success = mean_std(rates);
  return out;
}

std::optional<std::size_t> convergence_iteration(std::span<const double> success,
                                                 double threshold) {
  std::optional<std::size_t> out;
  for (std::size_t i = success.size(); i-- > 0;) {
    if (!(success[i] > threshold)) break;
    out = i;
  }
  return out;
}

}  // namespace iatrpo::evalr
