#pragma once

// Trust-region policy optimization for one agent's diagonal Gaussian policy.
//
// The optimizer is agnostic of where its inputs came from: a PolicyBatch
// holds the trainable network's input features, an additive constant
// offset for the action mean (the frozen single-agent output when training a
// modifier, zero otherwise), the executed actions, and their log-probs under
// the sampling policy.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iatrpo/nnet.hpp"
#include "iatrpo/rng.hpp"

namespace iatrpo::trpo {

using nnet::Matrix;
using nnet::ParameterVector;
using nnet::Vector;

struct TrpoConfig {
  double gamma = 0.99;
  double lam = 0.98;
  double max_kl = 0.01;
  int cg_iters = 10;
  double cg_damping = 0.1;
  double cg_residual_tol = 1e-10;
  int backtrack_steps = 10;
  double backtrack_ratio = 0.5;
  int vf_iters = 5;
  double vf_step = 1e-3;
  int vf_minibatch = 64;
  int batch_timesteps = 4096;
  double ent_coeff = 0.0;

  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t, where V_T = bootstrap;
// A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}; returns = A + V.
GaeResult compute_gae(std::span<const double> rewards,
                      std::span<const double> values, double bootstrap,
                      const std::vector<bool>& dones, double gamma, double lam);

// In place: zero mean and unit (population) standard deviation. A batch of
// one sample, or one with zero spread, is only centred.
void normalize_advantages(Vector& advantages);

using LinearOperator = std::function<Vector(const Vector&)>;

// Solves A x = b for symmetric positive-definite A given as a matvec. Stops
// when ||A x - b|| < residual_tol or after `iters` iterations.
Vector conjugate_gradient(const LinearOperator& matvec, const Vector& b,
                          int iters, double residual_tol);

struct PolicyBatch {
  Matrix inputs;         // feature_dim x n
  Matrix offsets;        // action_dim x n
  Matrix actions;        // action_dim x n
  Vector old_log_probs;  // n
  Vector advantages;     // n, normalized

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
  void validate(const ParameterVector& policy) const;
};

// Mean of exp(logpi_theta - logpi_old) * A over the batch, plus the entropy
// bonus ent_coeff * H(pi_theta).
double surrogate_loss(const ParameterVector& policy, const PolicyBatch& batch,
                      double ent_coeff = 0.0);

// Gradient of surrogate_loss with respect to the flat policy parameters
// (network values followed by log-std).
Vector surrogate_gradient(const ParameterVector& policy, const PolicyBatch& batch,
                          double ent_coeff = 0.0);

// Mean over the batch of KL(pi_old(.|x) || pi_new(.|x)).
double mean_kl(const ParameterVector& old_policy,
               const ParameterVector& new_policy, const PolicyBatch& batch);

// (H + damping I) v, with H the Hessian of mean_kl(policy, theta) at
// theta = policy. At that point the Hessian equals the Fisher information
// J^T diag(1/sigma^2) J / n for the mean parameters and 2 I for log-std,
// which is what gets evaluated.
Vector fisher_vector_product(const ParameterVector& policy,
                             const PolicyBatch& batch, const Vector& v,
                             double damping);

struct StepReport {
  double kl = 0.0;
  double improvement = 0.0;
  double expected_improvement = 0.0;
  int backtracks = 0;
  bool accepted = false;
  bool skipped = false;  // non-finite gradient or curvature
  double value_mse = 0.0;
  std::string note;
};

struct StepResult {
  ParameterVector params;
  StepReport report;
};

StepResult trpo_step(const ParameterVector& policy, const PolicyBatch& batch,
                     const TrpoConfig& cfg);

struct ValueBatch {
  Matrix inputs;   // feature_dim x n
  Vector offsets;  // n, frozen critic contribution (zero if none)
  Vector returns;  // n

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

struct ValueFitResult {
  ParameterVector params;
  double mse_before = 0.0;
  double mse_after = 0.0;
};

double value_mse(const ParameterVector& critic, const ValueBatch& batch);

// vf_iters epochs of minibatch gradient descent with fixed step vf_step on
// the mean squared error between critic(inputs) + offsets and returns.
ValueFitResult fit_value(const ParameterVector& critic, const ValueBatch& batch,
                         const TrpoConfig& cfg, Rng& rng);

}  // namespace iatrpo::trpo
