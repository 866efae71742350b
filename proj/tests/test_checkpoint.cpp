#include <doctest.h>

#include <cstdio>

#include "iatrpo/checkpoint.hpp"
#include "iatrpo/error.hpp"
#include "iatrpo/trainer.hpp"

using namespace iatrpo;

namespace {

Checkpoint sample(PolicyKind kind) {
  Rng rng(17);
  const NetworkShape shape{{8, 6}};
  Checkpoint c;
  const PolicyHandle single = make_single_policy(rng, shape);
  if (kind == PolicyKind::kSingleAgent) c.policy = single;
  if (kind == PolicyKind::kComposed) c.policy = make_composed_policy(single, 3, true, rng, shape);
  if (kind == PolicyKind::kMatrpo) c.policy = make_matrpo_policy(2, rng, shape);
  c.meta = {123456789012345ULL, 42, std::string(64, 'a'), envs::EnvId::kR3, 2, "iatrpo"};
  return c;
}

void same_net(const nnet::ParameterVector& a, const nnet::ParameterVector& b) {
  CHECK(a.spec.input_dim == b.spec.input_dim);
  CHECK(a.spec.hidden_dims == b.spec.hidden_dims);
  CHECK(a.spec.output_dim == b.spec.output_dim);
  CHECK(a.values == b.values);
  CHECK(a.log_std == b.log_std);
}

}  // namespace

TEST_CASE("checkpoints round-trip bit for bit") {
  for (auto kind : {PolicyKind::kSingleAgent, PolicyKind::kComposed, PolicyKind::kMatrpo}) {
    const Checkpoint c = sample(kind);
    const auto bytes = encode_checkpoint(c);
    const Checkpoint d = decode_checkpoint(bytes);
    CHECK(d.meta == c.meta);
    CHECK(d.policy.kind == c.policy.kind);
    CHECK(d.policy.num_agents == c.policy.num_agents);
    CHECK(d.policy.modifier_uses_goal == c.policy.modifier_uses_goal);
    same_net(d.policy.net.actor, c.policy.net.actor);
    same_net(d.policy.net.critic, c.policy.net.critic);
    CHECK(d.policy.frozen_single.has_value() == c.policy.frozen_single.has_value());
    if (c.policy.frozen_single) {
      same_net(d.policy.frozen_single->actor, c.policy.frozen_single->actor);
      same_net(d.policy.frozen_single->critic, c.policy.frozen_single->critic);
      CHECK(frozen_fingerprint(d.policy) == frozen_fingerprint(c.policy));
    }
    CHECK(encode_checkpoint(d) == bytes);
  }
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto bytes = encode_checkpoint(sample(PolicyKind::kComposed));
  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{19}, bytes.size() / 2,
                          bytes.size() - 1}) {
    const std::vector<std::uint8_t> shortened(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(decode_checkpoint(shortened), IoError);
  }
  auto flipped = bytes;
  flipped[bytes.size() - 100] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), IoError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), IoError);
  auto version = bytes;
  version[8] = 99;
  CHECK_THROWS_AS(decode_checkpoint(version), IoError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(longer), IoError);
}

TEST_CASE("files are written atomically and read back") {
  const std::string path = "test_checkpoint_tmp.ckpt";
  const Checkpoint c = sample(PolicyKind::kSingleAgent);
  save_checkpoint(c, path);
  CHECK(load_checkpoint(path).policy.net.actor.values == c.policy.net.actor.values);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  CHECK_THROWS_AS(write_file_atomic("/nonexistent/dir/x", "data"), IoError);
}

TEST_CASE("training continued from a reloaded checkpoint matches the in-memory run") {
  const envs::EnvConfig env;
  CurriculumConfig c;
  c.stage1_iterations = 2;
  c.stage2_iterations = 2;
  c.trpo.batch_timesteps = 200;
  c.probe_episodes = 2;
  c.hidden = {8, 8};
  const TrainingRun s = train_single(env, c);
  std::vector<PolicyHandle> reloaded;
  for (std::size_t r = 0; r < s.policies.size(); ++r) {
    Checkpoint ck{s.policies[r], {c.seed, 2, "h", c.env_id, r, "single"}};
    reloaded.push_back(decode_checkpoint(encode_checkpoint(ck)).policy);
  }
  const TrainingRun a = train_iatrpo(env, c, s.policies);
  const TrainingRun b = train_iatrpo(env, c, reloaded);
  for (std::size_t i = 0; i < a.policies.size(); ++i) {
    CHECK(a.policies[i].net.actor.values == b.policies[i].net.actor.values);
    CHECK(a.policies[i].net.critic.values == b.policies[i].net.critic.values);
  }
}
