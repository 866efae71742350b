#include "iatrpo/policy.hpp"

#include "iatrpo/error.hpp"
#include "iatrpo/hash.hpp"

namespace iatrpo {
namespace {

using envs::kActionDim;
using envs::kGoalFeatures;
using envs::kStateFeatures;
using envs::Observation;

constexpr double kHiddenScale = 1.0;
constexpr double kPolicyOutputScale = 0.01;
constexpr double kValueOutputScale = 1.0;
constexpr double kModifierValueOutputScale = 0.01;

nnet::MlpSpec make_spec(std::size_t in, std::size_t out, const NetworkShape& shape) {
  nnet::MlpSpec spec;
  spec.input_dim = in;
  spec.hidden_dims = shape.hidden;
  spec.output_dim = out;
  return spec;
}

// Writes own state and goal into rows [row, row + 7).
void put_own_goal(Matrix& m, Eigen::Index col, Eigen::Index row, const Observation& o) {
  m.block(row, col, kStateFeatures, 1) = o.own;
  m(row + kStateFeatures, col) = o.goal.x;
  m(row + kStateFeatures + 1, col) = o.goal.y;
}

void put_own(Matrix& m, Eigen::Index col, Eigen::Index row, const Observation& o) {
  m.block(row, col, kStateFeatures, 1) = o.own;
}

void put_others(Matrix& m, Eigen::Index col, Eigen::Index row, const Observation& o,
                std::size_t expected) {
  if (o.others.size() != expected) {
    throw ContractError("policy: observation carries " + std::to_string(o.others.size()) +
                        " other agents, policy expects " + std::to_string(expected));
  }
  for (const Vector& other : o.others) {
    m.block(row, col, kStateFeatures, 1) = other;
    row += kStateFeatures;
  }
}

Matrix frozen_inputs(std::span<const Observation* const> obs) {
  Matrix m(kStateFeatures + kGoalFeatures, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) put_own_goal(m, static_cast<Eigen::Index>(j), 0, *obs[j]);
  return m;
}

std::vector<const Observation*> one(const Observation& obs) { return {&obs}; }

GaussianAction single_column(const PolicyHandle& h, const Observation& obs) {
  const auto ptrs = one(obs);
  return GaussianAction{policy_means(h, ptrs).col(0), h.log_std()};
}

}  // namespace

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kSingleAgent: return "single";
    case PolicyKind::kComposed: return "composed";
    case PolicyKind::kMatrpo: return "matrpo";
  }
  return "?";
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "single") return PolicyKind::kSingleAgent;
  if (name == "composed") return PolicyKind::kComposed;
  if (name == "matrpo") return PolicyKind::kMatrpo;
  throw ContractError("unknown policy kind '" + name + "'");
}

std::size_t actor_input_dim(PolicyKind kind, std::size_t num_agents, bool modifier_uses_goal) {
  const std::size_t others = kStateFeatures * (num_agents - 1);
  switch (kind) {
    case PolicyKind::kSingleAgent: return kStateFeatures + kGoalFeatures;
    case PolicyKind::kComposed:
      return kStateFeatures + (modifier_uses_goal ? kGoalFeatures : 0) + others;
    case PolicyKind::kMatrpo: return kStateFeatures + kGoalFeatures + others;
  }
  return 0;
}

std::size_t critic_input_dim(PolicyKind kind, std::size_t num_agents, bool modifier_uses_goal) {
  const std::size_t base = actor_input_dim(kind, num_agents, modifier_uses_goal);
  return kind == PolicyKind::kMatrpo ? base + kActionDim * (num_agents - 1) : base;
}

void PolicyHandle::validate() const {
  require(num_agents >= 1, "policy: num_agents must be >= 1");
  if (kind == PolicyKind::kSingleAgent) {
    require(num_agents == 1, "policy: a single-agent policy acts alone");
  } else {
    require(num_agents >= 2, "policy: " + to_string(kind) + " policies need other agents");
  }
  if (kind == PolicyKind::kComposed) {
    require(frozen_single.has_value(), "policy: composed policy without frozen single-agent part");
  }
  require(net.actor.spec.input_dim == actor_input_dim(kind, num_agents, modifier_uses_goal),
          "policy: actor input dimension does not match its kind");
  require(net.critic.spec.input_dim == critic_input_dim(kind, num_agents, modifier_uses_goal),
          "policy: critic input dimension does not match its kind");
  require(net.actor.spec.output_dim == kActionDim &&
              net.actor.log_std.size() == static_cast<Eigen::Index>(kActionDim),
          "policy: actor must output a 2-D Gaussian");
  require(net.critic.spec.output_dim == 1 && net.critic.log_std.size() == 0,
          "policy: critic must have one output");
  net.actor.validate();
  net.critic.validate();
  if (frozen_single) {
    frozen_single->actor.validate();
    frozen_single->critic.validate();
  }
}

PolicyHandle make_single_policy(Rng& rng, const NetworkShape& shape) {
  PolicyHandle h;
  h.kind = PolicyKind::kSingleAgent;
  const std::size_t in = actor_input_dim(h.kind, 1, false);
  h.net.actor = nnet::init_params(make_spec(in, kActionDim, shape), rng, kHiddenScale,
                                  kPolicyOutputScale, kActionDim);
  h.net.critic = nnet::init_params(make_spec(in, 1, shape), rng, kHiddenScale, kValueOutputScale);
  return h;
}

PolicyHandle make_composed_policy(const PolicyHandle& single, std::size_t num_agents,
                                  bool modifier_uses_goal, Rng& rng, const NetworkShape& shape) {
  require(single.kind == PolicyKind::kSingleAgent,
          "make_composed_policy: stage-1 policy must be single-agent");
  require(num_agents >= 2, "make_composed_policy: needs at least two agents");
  PolicyHandle h;
  h.kind = PolicyKind::kComposed;
  h.num_agents = num_agents;
  h.modifier_uses_goal = modifier_uses_goal;
  h.frozen_single = single.net;
  const std::size_t in = actor_input_dim(h.kind, num_agents, modifier_uses_goal);
  h.net.actor = nnet::init_params(make_spec(in, kActionDim, shape), rng, kHiddenScale,
                                  kPolicyOutputScale, kActionDim);
  h.net.actor.log_std = single.log_std();
  h.net.critic = nnet::init_params(make_spec(in, 1, shape), rng, kHiddenScale,
                                   kModifierValueOutputScale);
  return h;
}

PolicyHandle make_matrpo_policy(std::size_t num_agents, Rng& rng, const NetworkShape& shape) {
  require(num_agents >= 2, "make_matrpo_policy: needs at least two agents");
  PolicyHandle h;
  h.kind = PolicyKind::kMatrpo;
  h.num_agents = num_agents;
  h.net.actor = nnet::init_params(
      make_spec(actor_input_dim(h.kind, num_agents, false), kActionDim, shape), rng,
      kHiddenScale, kPolicyOutputScale, kActionDim);
  h.net.critic = nnet::init_params(
      make_spec(critic_input_dim(h.kind, num_agents, false), 1, shape), rng, kHiddenScale,
      kValueOutputScale);
  return h;
}

Matrix actor_inputs(const PolicyHandle& h, std::span<const Observation* const> obs) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  Matrix m(static_cast<Eigen::Index>(h.net.actor.spec.input_dim), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Observation& o = *obs[static_cast<std::size_t>(j)];
    switch (h.kind) {
      case PolicyKind::kSingleAgent:
        put_own_goal(m, j, 0, o);
        break;
      case PolicyKind::kComposed:
        if (h.modifier_uses_goal) {
          put_own_goal(m, j, 0, o);
          put_others(m, j, kStateFeatures + kGoalFeatures, o, h.num_others());
        } else {
          put_own(m, j, 0, o);
          put_others(m, j, kStateFeatures, o, h.num_others());
        }
        break;
      case PolicyKind::kMatrpo:
        put_own_goal(m, j, 0, o);
        put_others(m, j, kStateFeatures + kGoalFeatures, o, h.num_others());
        break;
    }
  }
  return m;
}

Matrix critic_inputs(const PolicyHandle& h, std::span<const Observation* const> obs,
                     std::span<const Vector* const> other_actions) {
  Matrix base = actor_inputs(h, obs);
  if (h.kind != PolicyKind::kMatrpo) return base;
  require(other_actions.size() == obs.size(),
          "critic_inputs: MATRPO critic needs the other agents' actions");
  const auto extra = static_cast<Eigen::Index>(kActionDim * h.num_others());
  Matrix m(base.rows() + extra, base.cols());
  m.topRows(base.rows()) = base;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const Vector* a = other_actions[static_cast<std::size_t>(j)];
    require(a != nullptr && a->size() == extra,
            "critic_inputs: other agents' actions have the wrong length");
    m.block(base.rows(), j, extra, 1) = *a;
  }
  return m;
}

Matrix mean_offsets(const PolicyHandle& h, std::span<const Observation* const> obs) {
  if (h.kind != PolicyKind::kComposed) {
    return Matrix::Zero(static_cast<Eigen::Index>(kActionDim), static_cast<Eigen::Index>(obs.size()));
  }
  return nnet::forward(h.frozen_single->actor, frozen_inputs(obs));
}

Vector value_offsets(const PolicyHandle& h, std::span<const Observation* const> obs) {
  if (h.kind != PolicyKind::kComposed) return Vector::Zero(static_cast<Eigen::Index>(obs.size()));
  return nnet::forward(h.frozen_single->critic, frozen_inputs(obs)).row(0).transpose();
}

Matrix policy_means(const PolicyHandle& h, std::span<const Observation* const> obs) {
  Matrix means = nnet::forward_columns(h.net.actor, actor_inputs(h, obs));
  if (h.kind == PolicyKind::kComposed) {
    means += nnet::forward_columns(h.frozen_single->actor, frozen_inputs(obs));
  }
  return means;
}

Vector policy_values(const PolicyHandle& h, std::span<const Observation* const> obs,
                     std::span<const Vector* const> other_actions) {
  Vector v = nnet::forward_columns(h.net.critic, critic_inputs(h, obs, other_actions)).row(0).transpose();
  if (h.kind == PolicyKind::kComposed) {
    v += nnet::forward_columns(h.frozen_single->critic, frozen_inputs(obs)).row(0).transpose();
  }
  return v;
}

GaussianAction act_single(const PolicyHandle& h, const Observation& obs) {
  require(h.kind == PolicyKind::kSingleAgent, "act_single: handle is " + to_string(h.kind));
  return single_column(h, obs);
}

GaussianAction act_composed(const PolicyHandle& h, const Observation& obs) {
  require(h.kind == PolicyKind::kComposed, "act_composed: handle is " + to_string(h.kind));
  require(h.frozen_single.has_value(), "act_composed: missing frozen single-agent part");
  require(!obs.others.empty(), "act_composed: missing other agents' observations");
  return single_column(h, obs);
}

GaussianAction act_matrpo(const PolicyHandle& h, const Observation& obs) {
  require(h.kind == PolicyKind::kMatrpo, "act_matrpo: handle is " + to_string(h.kind));
  require(!obs.others.empty(), "act_matrpo: missing other agents' observations");
  return single_column(h, obs);
}

double value_matrpo(const PolicyHandle& h, const Observation& obs,
                    std::span<const Vector> other_actions) {
  require(h.kind == PolicyKind::kMatrpo, "value_matrpo: handle is " + to_string(h.kind));
  require(!obs.others.empty() && !other_actions.empty(),
          "value_matrpo: missing other agents' data");
  Vector joined(static_cast<Eigen::Index>(kActionDim * other_actions.size()));
  for (std::size_t k = 0; k < other_actions.size(); ++k) {
    require(other_actions[k].size() == static_cast<Eigen::Index>(kActionDim),
            "value_matrpo: other action has the wrong length");
    joined.segment(static_cast<Eigen::Index>(k * kActionDim), kActionDim) = other_actions[k];
  }
  const auto ptrs = one(obs);
  const Vector* acts[] = {&joined};
  return policy_values(h, ptrs, acts)[0];
}

GaussianAction act(const PolicyHandle& h, const Observation& obs) {
  switch (h.kind) {
    case PolicyKind::kSingleAgent: return act_single(h, obs);
    case PolicyKind::kComposed: return act_composed(h, obs);
    case PolicyKind::kMatrpo: return act_matrpo(h, obs);
  }
  throw ContractError("act: unknown policy kind");
}

std::string frozen_fingerprint(const PolicyHandle& h) {
  if (!h.frozen_single) return {};
  Hasher hasher;
  hasher.update(h.frozen_single->actor.values);
  hasher.update(h.frozen_single->actor.log_std);
  hasher.update(h.frozen_single->critic.values);
  const Digest d = hasher.finish();
  return to_hex(d);
}

}  // namespace iatrpo
