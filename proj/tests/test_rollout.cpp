#include <doctest.h>

#include "iatrpo/error.hpp"
#include "iatrpo/rollout.hpp"

using namespace iatrpo;
using namespace iatrpo::envs;

namespace {

const NetworkShape kSmall{{16, 16}};

std::vector<PolicyHandle> composed_team(EnvId id, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PolicyHandle> team;
  for (std::size_t i = 0; i < agent_count(id); ++i) {
    const PolicyHandle s = make_single_policy(rng, kSmall);
    team.push_back(make_composed_policy(s, agent_count(id), false, rng, kSmall));
  }
  return team;
}

std::vector<PolicyHandle> matrpo_team(EnvId id, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PolicyHandle> team;
  for (std::size_t i = 0; i < agent_count(id); ++i) team.push_back(make_matrpo_policy(agent_count(id), rng, kSmall));
  return team;
}

std::vector<std::uint64_t> seeds(std::size_t n, std::uint64_t base) {
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(derive_seed(base, {k}));
  return out;
}

void check_same(const std::vector<EpisodeResult>& a, const std::vector<EpisodeResult>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t e = 0; e < a.size(); ++e) {
    CHECK(a[e].trace.length == b[e].trace.length);
    CHECK(a[e].trace.outcomes == b[e].trace.outcomes);
    REQUIRE(a[e].transitions.size() == b[e].transitions.size());
    for (std::size_t i = 0; i < a[e].transitions.size(); ++i) {
      REQUIRE(a[e].transitions[i].size() == b[e].transitions[i].size());
      for (std::size_t k = 0; k < a[e].transitions[i].size(); ++k) {
        const auto& x = a[e].transitions[i][k];
        const auto& y = b[e].transitions[i][k];
        CHECK(x.action == y.action);
        CHECK(x.log_prob == y.log_prob);
        CHECK(x.reward == y.reward);
        CHECK(x.value_estimate == y.value_estimate);
      }
    }
  }
}

}  // namespace

TEST_CASE("results do not depend on the number of lanes") {
  const EnvConfig cfg;
  for (EnvId id : {EnvId::kC2, EnvId::kR3}) {
    const auto team = matrpo_team(id, 1);
    const auto s = seeds(9, 77);
    RolloutOptions a;
    a.lanes = 1;
    RolloutOptions b;
    b.lanes = 4;
    check_same(run_episodes(cfg, id, team, s, a), run_episodes(cfg, id, team, s, b));
  }
}

TEST_CASE("transitions carry their agent tag, log-prob and value") {
  const EnvConfig cfg;
  const EnvId id = EnvId::kC2Fixed;
  const auto team = composed_team(id, 2);
  const auto res = run_episodes(cfg, id, team, seeds(4, 5), RolloutOptions{});
  for (const auto& r : res) {
    const auto& tr = r.trace;
    CHECK(tr.length <= cfg.geometry.horizon);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& ts = r.transitions[i];
      REQUIRE(ts.size() == tr.positions[i].size());
      REQUIRE(!ts.empty());
      CHECK(ts.back().done);
      for (std::size_t k = 0; k + 1 < ts.size(); ++k) CHECK_FALSE(ts[k].done);
      for (const auto& t : ts) {
        CHECK(t.agent == i);
        const GaussianAction g = act(team[i], t.observation);
        CHECK(t.log_prob == doctest::Approx(nnet::gaussian_log_prob(g, t.action)).epsilon(1e-10));
        const envs::Observation* o = &t.observation;
        CHECK(t.value_estimate == doctest::Approx(policy_values(team[i], std::span(&o, 1), {})[0]));
      }
    }
    CHECK(tr.first_arrival.has_value() ==
          (tr.outcomes[0] == Outcome::kReached || tr.outcomes[1] == Outcome::kReached));
  }
}

TEST_CASE("MATRPO transitions store the others' actions, zero once they are terminal") {
  const EnvConfig cfg;
  const EnvId id = EnvId::kR2;
  const auto team = matrpo_team(id, 3);
  const auto res = run_episodes(cfg, id, team, seeds(3, 9), RolloutOptions{});
  for (const auto& r : res) {
    const auto& t0 = r.transitions[0];
    const auto& t1 = r.transitions[1];
    for (std::size_t k = 0; k < t0.size(); ++k) {
      REQUIRE(t0[k].other_actions.size() == 2);
      if (k < t1.size()) {
        CHECK(t0[k].other_actions == t1[k].action);
      } else {
        CHECK(t0[k].other_actions.isZero());
      }
    }
  }
}

TEST_CASE("deterministic mode acts with the mean") {
  const EnvConfig cfg;
  const auto team = composed_team(EnvId::kC2, 4);
  RolloutOptions o;
  o.deterministic = true;
  const auto res = run_episodes(cfg, EnvId::kC2, team, seeds(2, 1), o);
  for (const auto& r : res) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (const auto& t : r.transitions[i]) {
        CHECK((t.action - act(team[i], t.observation).mean).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("single mode starts from the same world as the multi-agent episode") {
  const EnvConfig cfg;
  Rng rng(5);
  const std::vector<PolicyHandle> one = {make_single_policy(rng, kSmall)};
  const auto team = composed_team(EnvId::kR3, 6);
  const auto s = seeds(3, 3);
  const auto multi = run_episodes(cfg, EnvId::kR3, team, s, RolloutOptions{});
  for (std::size_t role = 0; role < 3; ++role) {
    RolloutOptions o;
    o.mode = RolloutMode::kSingle;
    o.single_role = role;
    const auto alone = run_episodes(cfg, EnvId::kR3, one, s, o);
    for (std::size_t e = 0; e < s.size(); ++e) {
      CHECK(alone[e].trace.starts[0].x == multi[e].trace.starts[role].x);
      CHECK(alone[e].trace.starts[0].y == multi[e].trace.starts[role].y);
      CHECK(alone[e].trace.goals[0].x == multi[e].trace.goals[role].x);
      CHECK(alone[e].trace.roles[0] == role);
    }
  }
  RolloutOptions bad;
  bad.mode = RolloutMode::kSingle;
  bad.single_role = 3;
  CHECK_THROWS_AS(run_episodes(cfg, EnvId::kR3, one, s, bad), ContractError);
}

TEST_CASE("policy and agent counts must match the world") {
  const EnvConfig cfg;
  const auto team = composed_team(EnvId::kC2, 7);
  CHECK_THROWS_AS(run_episodes(cfg, EnvId::kR3, team, seeds(1, 1), RolloutOptions{}), ContractError);
}

TEST_CASE("batches hold whole episodes until the budget is met") {
  const EnvConfig cfg;
  const auto team = composed_team(EnvId::kC2Fixed, 8);
  for (std::size_t budget : {1u, 150u, 700u}) {
    RolloutOptions a;
    a.lanes = 3;
    RolloutOptions b;
    b.lanes = 16;
    const RolloutBatch x = rollout(cfg, EnvId::kC2Fixed, team, budget, 11, 2, a);
    const RolloutBatch y = rollout(cfg, EnvId::kC2Fixed, team, budget, 11, 2, b);
    CHECK(x.timesteps >= budget);
    CHECK(x.timesteps - static_cast<std::size_t>(x.traces.back().length) < budget);
    std::size_t total = 0;
    for (const auto& t : x.traces) total += static_cast<std::size_t>(t.length);
    CHECK(total == x.timesteps);
    CHECK(x.timesteps == y.timesteps);
    REQUIRE(x.per_agent[0].size() == y.per_agent[0].size());
    for (std::size_t k = 0; k < x.per_agent[0].size(); ++k) {
      CHECK(x.per_agent[0][k].action == y.per_agent[0][k].action);
      CHECK(x.per_agent[0][k].episode == y.per_agent[0][k].episode);
    }
    for (std::size_t e = 0; e < x.traces.size(); ++e) {
      CHECK(x.traces[e].seed == rollout_episode_seed(11, 2, e));
    }
  }
}
