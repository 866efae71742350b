#include <doctest.h>

#include "iatrpo/error.hpp"
#include "iatrpo/policy.hpp"

using namespace iatrpo;
using namespace iatrpo::envs;

namespace {

const NetworkShape kSmall{{16, 16}};

Observation sample_obs(std::size_t others, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  Observation o;
  o.own = Vector(5);
  for (int i = 0; i < 5; ++i) o.own[i] = u(rng);
  o.goal = {u(rng), u(rng)};
  for (std::size_t j = 0; j < others; ++j) {
    Vector v(5);
    for (int i = 0; i < 5; ++i) v[i] = u(rng);
    o.others.push_back(v);
  }
  return o;
}

std::vector<double> own_goal(const Observation& o) {
  std::vector<double> x(o.own.data(), o.own.data() + 5);
  x.push_back(o.goal.x);
  x.push_back(o.goal.y);
  return x;
}

}  // namespace

TEST_CASE("input dimensions of each architecture") {
  CHECK(actor_input_dim(PolicyKind::kSingleAgent, 1, false) == 7);
  CHECK(actor_input_dim(PolicyKind::kComposed, 2, false) == 10);
  CHECK(actor_input_dim(PolicyKind::kComposed, 3, true) == 17);
  CHECK(actor_input_dim(PolicyKind::kMatrpo, 2, false) == 12);
  CHECK(critic_input_dim(PolicyKind::kMatrpo, 3, false) == 17 + 4);
  CHECK(critic_input_dim(PolicyKind::kComposed, 2, false) == 10);
}

TEST_CASE("kind names round trip") {
  for (auto k : {PolicyKind::kSingleAgent, PolicyKind::kComposed, PolicyKind::kMatrpo}) {
    CHECK(parse_policy_kind(to_string(k)) == k);
  }
  CHECK_THROWS(parse_policy_kind("ddpg"));
}

TEST_CASE("default networks have two hidden layers of 128") {
  Rng rng(1);
  const PolicyHandle s = make_single_policy(rng);
  CHECK(s.net.actor.spec.hidden_dims == std::vector<std::size_t>{128, 128});
  CHECK(s.net.critic.spec.hidden_dims == std::vector<std::size_t>{128, 128});
  CHECK(s.log_std().isZero());
}

TEST_CASE("the single-agent mean is the actor output on own state and goal") {
  Rng rng(2);
  const PolicyHandle s = make_single_policy(rng, kSmall);
  const Observation o = sample_obs(0, 3);
  const auto x = own_goal(o);
  const Vector want = nnet::mlp_forward(s.net.actor, x);
  const GaussianAction a = act(s, o);
  CHECK((a.mean - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.log_std == s.log_std());
}

TEST_CASE("the composed mean is the frozen mean plus the modifier mean") {
  Rng rng(4);
  const PolicyHandle s = make_single_policy(rng, kSmall);
  for (bool with_goal : {false, true}) {
    const PolicyHandle c = make_composed_policy(s, 3, with_goal, rng, kSmall);
    CHECK(c.log_std() == s.log_std());
    const Observation o = sample_obs(2, 5);
    std::vector<double> mod(o.own.data(), o.own.data() + 5);
    if (with_goal) {
      mod.push_back(o.goal.x);
      mod.push_back(o.goal.y);
    }
    for (const auto& other : o.others) mod.insert(mod.end(), other.data(), other.data() + 5);
    const Vector want = nnet::mlp_forward(s.net.actor, own_goal(o)) + nnet::mlp_forward(c.net.actor, mod);
    CHECK((act(c, o).mean - want).cwiseAbs().maxCoeff() < 1e-12);

    const Observation* ptr = &o;
    const Vector v = policy_values(c, std::span(&ptr, 1), {});
    const double want_v = nnet::mlp_forward(s.net.critic, own_goal(o))[0] + nnet::mlp_forward(c.net.critic, mod)[0];
    CHECK(v[0] == doctest::Approx(want_v));
  }
}

TEST_CASE("a fresh modifier barely moves the stage-1 policy") {
  Rng rng(6);
  const PolicyHandle s = make_single_policy(rng, kSmall);
  const PolicyHandle c = make_composed_policy(s, 2, false, rng, kSmall);
  const Observation o = sample_obs(1, 7);
  const Vector diff = act(c, o).mean - nnet::mlp_forward(s.net.actor, own_goal(o));
  CHECK(diff.cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("the MATRPO critic sees the other agents' actions") {
  Rng rng(8);
  const PolicyHandle m = make_matrpo_policy(2, rng, kSmall);
  const Observation o = sample_obs(1, 9);
  Vector a1(2), a2(2);
  a1 << 0.5, -0.5;
  a2 << -1.0, 1.0;
  const double v1 = value_matrpo(m, o, std::vector<Vector>{a1});
  const double v2 = value_matrpo(m, o, std::vector<Vector>{a2});
  CHECK(v1 != v2);
  const Observation* ptr = &o;
  const Vector* aptr = &a1;
  CHECK(policy_values(m, std::span(&ptr, 1), std::span(&aptr, 1))[0] == doctest::Approx(v1));
  CHECK_THROWS_AS(value_matrpo(m, o, std::vector<Vector>{}), ContractError);
}

TEST_CASE("batched means agree with per-observation evaluation") {
  Rng rng(10);
  const PolicyHandle s = make_single_policy(rng, kSmall);
  const PolicyHandle c = make_composed_policy(s, 2, false, rng, kSmall);
  std::vector<Observation> obs;
  for (int k = 0; k < 6; ++k) obs.push_back(sample_obs(1, 20 + static_cast<std::uint64_t>(k)));
  std::vector<const Observation*> ptrs;
  for (const auto& o : obs) ptrs.push_back(&o);
  const Matrix means = policy_means(c, ptrs);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    CHECK((means.col(static_cast<Eigen::Index>(k)) - act(c, obs[k]).mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("the frozen fingerprint tracks only the frozen part") {
  Rng rng(11);
  const PolicyHandle s = make_single_policy(rng, kSmall);
  PolicyHandle c = make_composed_policy(s, 2, false, rng, kSmall);
  const std::string fp = frozen_fingerprint(c);
  CHECK(fp.size() == 64);
  CHECK(frozen_fingerprint(s).empty());
  c.net.actor.values[0] += 1.0;
  CHECK(frozen_fingerprint(c) == fp);
  c.frozen_single->actor.values[0] += 1e-12;
  CHECK(frozen_fingerprint(c) != fp);
}

TEST_CASE("structural checks") {
  Rng rng(12);
  PolicyHandle s = make_single_policy(rng, kSmall);
  CHECK_NOTHROW(s.validate());
  s.num_agents = 2;
  CHECK_THROWS_AS(s.validate(), ContractError);
  const PolicyHandle m = make_matrpo_policy(2, rng, kSmall);
  CHECK_THROWS_AS(make_composed_policy(m, 2, false, rng, kSmall), ContractError);
  CHECK_THROWS_AS(make_matrpo_policy(1, rng, kSmall), ContractError);
}
