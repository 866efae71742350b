#include "iatrpo/trainer.hpp"

#include <cstdio>
#include <ostream>

#include "iatrpo/error.hpp"

namespace iatrpo {
namespace {

using envs::kActionDim;

// Stage tags keep the seed streams of the three training modes apart.
constexpr std::uint64_t kStageSingle = 1;
constexpr std::uint64_t kStageIatrpo = 2;
constexpr std::uint64_t kStageMatrpo = 3;

double mean_length(const std::vector<EpisodeTrace>& traces, std::size_t agent) {
  if (traces.empty()) return 0.0;
  double total = 0.0;
  for (const auto& tr : traces) total += static_cast<double>(tr.positions[agent].size());
  return total / static_cast<double>(traces.size());
}

double mean_return(const std::vector<Transition>& transitions, std::size_t episodes) {
  double total = 0.0;
  for (const auto& t : transitions) total += t.reward;
  return episodes == 0 ? 0.0 : total / static_cast<double>(episodes);
}

void log_iteration(const TrainOptions& options, const char* stage,
                   const std::vector<IterationMetrics>& row) {
  if (options.log == nullptr || row.empty()) return;
  const int it = row.front().iteration;
  if (options.log_every <= 0 || (it % options.log_every) != 0) return;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "[%s] iter %5d joint %.3f", stage, it,
                row.front().joint_success_probe);
  *options.log << buf;
  for (const auto& m : row) {
    std::snprintf(buf, sizeof(buf), " | a%zu len %6.1f succ %.2f ret %7.3f kl %.4f bt %d ent %.3f", m.agent,
                  m.mean_episode_length, m.success_probe, m.mean_return, m.step.kl,
                  m.step.backtracks, m.entropy);
    *options.log << buf;
  }
  *options.log << std::endl;
}

// Shared loop of the simultaneous multi-agent stages.
TrainingRun train_joint(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                        std::vector<PolicyHandle> policies, int iterations,
                        std::uint64_t stage, const char* stage_name,
                        const TrainOptions& options) {
  const std::size_t n = policies.size();
  TrainingRun run;
  run.metrics.assign(n, {});
  std::vector<std::string> frozen(n);
  for (std::size_t i = 0; i < n; ++i) frozen[i] = frozen_fingerprint(policies[i]);
  std::vector<Rng> value_rngs;
  for (std::size_t i = 0; i < n; ++i) {
    value_rngs.push_back(make_rng(cfg.seed, {stream_id(Stream::kValueFit), stage, i}));
  }
  const std::uint64_t rollout_seed = derive_seed(cfg.seed, {stream_id(Stream::kRollout), stage});
  const std::uint64_t probe_seed = derive_seed(cfg.seed, {stream_id(Stream::kProbe), stage});
  RolloutOptions ro;
  ro.mode = RolloutMode::kMulti;
  ro.lanes = static_cast<std::size_t>(cfg.rollout_lanes);

  int streak = 0;
  int it = 0;
  for (; it < iterations; ++it) {
    RolloutBatch batch = rollout(env, cfg.env_id, policies,
                                 static_cast<std::size_t>(cfg.trpo.batch_timesteps), rollout_seed,
                                 static_cast<std::uint64_t>(it), ro);
    std::vector<IterationMetrics> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      row[i].iteration = it;
      row[i].agent = i;
      row[i].mean_episode_length = mean_length(batch.traces, i);
      row[i].mean_return = mean_return(batch.per_agent[i], batch.traces.size());
      row[i].step = update_agent(policies[i], i, batch.per_agent[i], cfg.trpo, value_rngs[i]);
      row[i].entropy = nnet::gaussian_entropy({policies[i].log_std(), policies[i].log_std()});
      if (frozen_fingerprint(policies[i]) != frozen[i]) {
        throw ContractError("frozen single-agent parameters changed during training");
      }
    }
    const ProbeResult pr = probe(env, cfg.env_id, policies, RolloutMode::kMulti, 0,
                                 cfg.probe_episodes, probe_seed, ro.lanes);
    for (std::size_t i = 0; i < n; ++i) {
      row[i].success_probe = pr.agent_success[i];
      row[i].joint_success_probe = pr.joint_success;
      run.metrics[i].push_back(row[i]);
    }
    log_iteration(options, stage_name, row);
    streak = pr.joint_success >= cfg.early_stop_success ? streak + 1 : 0;
    if (cfg.early_stop_window > 0 && streak >= cfg.early_stop_window) {
      run.early_stopped = true;
      ++it;
      break;
    }
  }
  run.policies = std::move(policies);
  run.iterations.assign(n, it);
  return run;
}

}  // namespace

void CurriculumConfig::validate() const {
  require(stage1_iterations >= 0, "curriculum.stage1_iterations must be >= 0");
  require(stage2_iterations >= 0, "curriculum.stage2_iterations must be >= 0");
  require(early_stop_success >= 0.0 && early_stop_success <= 1.0,
          "curriculum.early_stop_success must be in [0, 1]");
  require(early_stop_window >= 0, "curriculum.early_stop_window must be >= 0");
  require(probe_episodes >= 1, "curriculum.probe_episodes must be >= 1");
  require(rollout_lanes >= 1, "curriculum.rollout_lanes must be >= 1");
  require(!hidden.empty(), "curriculum.hidden needs at least one layer");
  for (auto h : hidden) require(h >= 1, "curriculum.hidden sizes must be >= 1");
  trpo.validate();
}

ProbeResult probe(const envs::EnvConfig& env, envs::EnvId env_id,
                  std::span<const PolicyHandle> policies, RolloutMode mode,
                  std::size_t single_role, int episodes, std::uint64_t seed, std::size_t lanes) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(episodes));
  for (std::size_t e = 0; e < seeds.size(); ++e) seeds[e] = derive_seed(seed, {e});
  RolloutOptions ro;
  ro.mode = mode;
  ro.single_role = single_role;
  ro.deterministic = true;
  ro.record_transitions = false;
  ro.lanes = lanes;
  const auto results = run_episodes(env, env_id, policies, seeds, ro);
  ProbeResult pr;
  pr.agent_success.assign(policies.size(), 0.0);
  for (const auto& r : results) {
    for (std::size_t i = 0; i < policies.size(); ++i) {
      if (r.trace.outcomes[i] == Outcome::kReached) pr.agent_success[i] += 1.0;
    }
    if (r.trace.success()) pr.joint_success += 1.0;
  }
  for (auto& s : pr.agent_success) s /= static_cast<double>(episodes);
  pr.joint_success /= static_cast<double>(episodes);
  return pr;
}

trpo::StepReport update_agent(PolicyHandle& handle, std::size_t agent,
                              const std::vector<Transition>& transitions,
                              const trpo::TrpoConfig& cfg, Rng& value_rng) {
  const std::size_t n = transitions.size();
  require(n > 0, "update_agent: agent " + std::to_string(agent) + " has no transitions");
  std::vector<const envs::Observation*> obs(n);
  std::vector<const Vector*> other_actions(n);
  std::vector<double> rewards(n);
  std::vector<double> values(n);
  std::vector<bool> dones(n);
  trpo::PolicyBatch pb;
  pb.actions.resize(static_cast<Eigen::Index>(kActionDim), static_cast<Eigen::Index>(n));
  pb.old_log_probs.resize(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const Transition& t = transitions[k];
    if (t.agent != agent) {
      throw ContractError("update_agent: transition of agent " + std::to_string(t.agent) +
                          " in the batch of agent " + std::to_string(agent));
    }
    obs[k] = &t.observation;
    other_actions[k] = &t.other_actions;
    rewards[k] = t.reward;
    values[k] = t.value_estimate;
    dones[k] = t.done;
    pb.actions.col(static_cast<Eigen::Index>(k)) = t.action;
    pb.old_log_probs[static_cast<Eigen::Index>(k)] = t.log_prob;
  }
  const trpo::GaeResult gae = trpo::compute_gae(rewards, values, 0.0, dones, cfg.gamma, cfg.lam);
  pb.advantages = Eigen::Map<const Vector>(gae.advantages.data(), static_cast<Eigen::Index>(n));
  trpo::normalize_advantages(pb.advantages);
  pb.inputs = actor_inputs(handle, obs);
  pb.offsets = mean_offsets(handle, obs);

  trpo::ValueBatch vb;
  vb.inputs = critic_inputs(handle, obs, other_actions);
  vb.offsets = value_offsets(handle, obs);
  vb.returns = Eigen::Map<const Vector>(gae.returns.data(), static_cast<Eigen::Index>(n));

  trpo::StepResult step = trpo::trpo_step(handle.net.actor, pb, cfg);
  handle.net.actor = std::move(step.params);
  const trpo::ValueFitResult fit = trpo::fit_value(handle.net.critic, vb, cfg, value_rng);
  handle.net.critic = fit.params;
  step.report.value_mse = fit.mse_before;
  return step.report;
}

TrainingRun train_single(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                         const TrainOptions& options) {
  cfg.validate();
  env.validate();
  const std::size_t roles = envs::agent_count(cfg.env_id);
  TrainingRun run;
  run.metrics.assign(roles, {});
  RolloutOptions ro;
  ro.mode = RolloutMode::kSingle;
  ro.lanes = static_cast<std::size_t>(cfg.rollout_lanes);
  bool all_stopped = true;
  for (std::size_t r = 0; r < roles; ++r) {
    Rng init = make_rng(cfg.seed, {stream_id(Stream::kInit), kStageSingle, r});
    std::vector<PolicyHandle> policy = {make_single_policy(init, cfg.shape())};
    Rng value_rng = make_rng(cfg.seed, {stream_id(Stream::kValueFit), kStageSingle, r});
    const std::uint64_t rollout_seed =
        derive_seed(cfg.seed, {stream_id(Stream::kRollout), kStageSingle, r});
    const std::uint64_t probe_seed = derive_seed(cfg.seed, {stream_id(Stream::kProbe), kStageSingle, r});
    ro.single_role = r;
    int streak = 0;
    int it = 0;
    bool stopped = false;
    const std::string stage = "single/" + envs::role_name(cfg.env_id, r);
    for (; it < cfg.stage1_iterations; ++it) {
      RolloutBatch batch = rollout(env, cfg.env_id, policy,
                                   static_cast<std::size_t>(cfg.trpo.batch_timesteps), rollout_seed,
                                   static_cast<std::uint64_t>(it), ro);
      IterationMetrics m;
      m.iteration = it;
      m.agent = r;
      m.mean_episode_length = mean_length(batch.traces, 0);
      m.mean_return = mean_return(batch.per_agent[0], batch.traces.size());
      m.step = update_agent(policy[0], 0, batch.per_agent[0], cfg.trpo, value_rng);
      m.entropy = nnet::gaussian_entropy({policy[0].log_std(), policy[0].log_std()});
      const ProbeResult pr = probe(env, cfg.env_id, policy, RolloutMode::kSingle, r,
                                   cfg.probe_episodes, probe_seed, ro.lanes);
      m.success_probe = pr.agent_success[0];
      m.joint_success_probe = pr.joint_success;
      run.metrics[r].push_back(m);
      log_iteration(options, stage.c_str(), {m});
      streak = pr.joint_success >= cfg.early_stop_success ? streak + 1 : 0;
      if (cfg.early_stop_window > 0 && streak >= cfg.early_stop_window) {
        stopped = true;
        ++it;
        break;
      }
    }
    all_stopped = all_stopped && stopped;
    run.policies.push_back(std::move(policy[0]));
    run.iterations.push_back(it);
  }
  run.early_stopped = all_stopped;
  return run;
}

TrainingRun train_iatrpo(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                         const std::vector<PolicyHandle>& single_policies,
                         const TrainOptions& options) {
  cfg.validate();
  env.validate();
  const std::size_t n = envs::agent_count(cfg.env_id);
  if (single_policies.size() != n) {
    throw ContractError("train_iatrpo: expected " + std::to_string(n) +
                        " stage-1 policies, got " + std::to_string(single_policies.size()));
  }
  std::vector<PolicyHandle> policies;
  for (std::size_t i = 0; i < n; ++i) {
    require(single_policies[i].kind == PolicyKind::kSingleAgent,
            "train_iatrpo: stage-1 checkpoint " + std::to_string(i) + " is not single-agent");
    Rng init = make_rng(cfg.seed, {stream_id(Stream::kInit), kStageIatrpo, i});
    policies.push_back(
        make_composed_policy(single_policies[i], n, cfg.modifier_uses_goal, init, cfg.shape()));
  }
  return train_joint(env, cfg, std::move(policies), cfg.stage2_iterations, kStageIatrpo, "iatrpo",
                     options);
}

TrainingRun train_matrpo(const envs::EnvConfig& env, const CurriculumConfig& cfg,
                         const TrainOptions& options) {
  cfg.validate();
  env.validate();
  const std::size_t n = envs::agent_count(cfg.env_id);
  std::vector<PolicyHandle> policies;
  for (std::size_t i = 0; i < n; ++i) {
    Rng init = make_rng(cfg.seed, {stream_id(Stream::kInit), kStageMatrpo, i});
    policies.push_back(make_matrpo_policy(n, init, cfg.shape()));
  }
  return train_joint(env, cfg, std::move(policies), cfg.stage2_iterations, kStageMatrpo, "matrpo",
                     options);
}

}  // namespace iatrpo
