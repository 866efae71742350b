#include "iatrpo/trpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iatrpo/error.hpp"

namespace iatrpo::trpo {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Per-sample log-probabilities of the batch actions under a policy whose
// mean network produced `means` (action_dim x n, offsets already added).
Vector log_probs(const Matrix& means, const Vector& log_std, const Matrix& actions) {
  const Vector inv_std = (-log_std.array()).exp();
  Matrix z = (actions - means).array().colwise() * inv_std.array();
  Vector lp = -0.5 * z.colwise().squaredNorm().transpose();
  lp.array() -= log_std.sum() + static_cast<double>(log_std.size()) * kHalfLog2Pi;
  return lp;
}

double entropy(const Vector& log_std) {
  return log_std.sum() + static_cast<double>(log_std.size()) * (0.5 + kHalfLog2Pi);
}

// Mean KL(old || new) between diagonal Gaussians sharing the batch layout.
double batch_kl(const Matrix& old_means, const Vector& old_log_std,
                const Matrix& new_means, const Vector& new_log_std) {
  const auto n = static_cast<double>(old_means.cols());
  const Vector old_var = (2.0 * old_log_std.array()).exp();
  const Vector inv_new_var = (-2.0 * new_log_std.array()).exp();
  const Matrix dm = old_means - new_means;
  const double mean_term =
      (dm.array().square().colwise() * inv_new_var.array()).sum() / (2.0 * n);
  const double const_term =
      (new_log_std - old_log_std).sum() +
      0.5 * (old_var.array() * inv_new_var.array()).sum() -
      0.5 * static_cast<double>(old_log_std.size());
  return const_term + mean_term;
}

Matrix policy_means(const ParameterVector& policy, const PolicyBatch& batch,
                    nnet::ForwardCache* cache = nullptr) {
  return nnet::forward(policy, batch.inputs, cache) + batch.offsets;
}

// Objective pieces evaluated around the sampling policy, with the forward
// pass at theta_old cached for the gradient and every Fisher product.
class TrustRegion {
 public:
  TrustRegion(const ParameterVector& policy, const PolicyBatch& batch, double ent_coeff)
      : policy_(policy), batch_(batch), ent_coeff_(ent_coeff) {
    old_means_ = policy_means(policy, batch, &cache_);
  }

  Vector gradient() const {
    const auto n = static_cast<double>(batch_.size());
    const Vector lp = log_probs(old_means_, policy_.log_std, batch_.actions);
    const Vector weight =
        (lp - batch_.old_log_probs).array().exp() * batch_.advantages.array() / n;
    const Vector inv_var = (-2.0 * policy_.log_std.array()).exp();
    const Matrix diff = batch_.actions - old_means_;
    Matrix mean_grad = diff.array().colwise() * inv_var.array();
    mean_grad.array().rowwise() *= weight.transpose().array();
    Vector grad(policy_.flat_size());
    grad.head(policy_.values.size()) = nnet::backward(policy_, cache_, mean_grad);
    const Matrix sq = diff.array().square().colwise() * inv_var.array();
    grad.tail(policy_.log_std.size()) =
        (sq.array() - 1.0).matrix() * weight + Vector::Constant(policy_.log_std.size(), ent_coeff_);
    return grad;
  }

  Vector fvp(const Vector& v, double damping) const {
    const auto n = static_cast<double>(batch_.size());
    const Eigen::Index nv = policy_.values.size();
    const Vector inv_var = (-2.0 * policy_.log_std.array()).exp();
    Matrix jv = nnet::jvp(policy_, cache_, v.head(nv));
    jv.array().colwise() *= inv_var.array();
    Vector out(v.size());
    out.head(nv) = nnet::backward(policy_, cache_, jv) / n;
    out.tail(v.size() - nv) = 2.0 * v.tail(v.size() - nv);
    out += damping * v;
    return out;
  }

  // (surrogate, kl) at a candidate.
  std::pair<double, double> evaluate(const ParameterVector& candidate) const {
    const Matrix means = policy_means(candidate, batch_);
    const Vector lp = log_probs(means, candidate.log_std, batch_.actions);
    const double surr =
        ((lp - batch_.old_log_probs).array().exp() * batch_.advantages.array()).mean() +
        ent_coeff_ * entropy(candidate.log_std);
    const double kl = batch_kl(old_means_, policy_.log_std, means, candidate.log_std);
    return {surr, kl};
  }

 private:
  const ParameterVector& policy_;
  const PolicyBatch& batch_;
  double ent_coeff_;
  nnet::ForwardCache cache_;
  Matrix old_means_;
};

}  // namespace

void TrpoConfig::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, "trpo.gamma must be in [0, 1]");
  require(lam >= 0.0 && lam <= 1.0, "trpo.lam must be in [0, 1]");
  require(max_kl > 0.0, "trpo.max_kl must be > 0");
  require(cg_iters >= 1, "trpo.cg_iters must be >= 1");
  require(cg_damping >= 0.0, "trpo.cg_damping must be >= 0");
  require(backtrack_steps >= 1, "trpo.backtrack_steps must be >= 1");
  require(backtrack_ratio > 0.0 && backtrack_ratio < 1.0,
          "trpo.backtrack_ratio must be in (0, 1)");
  require(vf_iters >= 0, "trpo.vf_iters must be >= 0");
  require(vf_step >= 0.0, "trpo.vf_step must be >= 0");
  require(vf_minibatch >= 1, "trpo.vf_minibatch must be >= 1");
  require(batch_timesteps >= 1, "trpo.batch_timesteps must be >= 1");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      double bootstrap, const std::vector<bool>& dones, double gamma,
                      double lam) {
  const std::size_t n = rewards.size();
  require(n > 0, "compute_gae: empty input");
  require(values.size() == n && dones.size() == n,
          "compute_gae: rewards, values and dones differ in length");
  require(gamma >= 0.0 && gamma <= 1.0 && lam >= 0.0 && lam <= 1.0,
          "compute_gae: gamma and lam must be in [0, 1]");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lam * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
    next_value = values[t];
  }
  return out;
}

void normalize_advantages(Vector& advantages) {
  if (advantages.size() == 0) return;
  const double mean = advantages.mean();
  advantages.array() -= mean;
  if (advantages.size() < 2) return;
  const double stddev = std::sqrt(advantages.squaredNorm() / static_cast<double>(advantages.size()));
  if (stddev > 0.0) advantages /= stddev;
}

Vector conjugate_gradient(const LinearOperator& matvec, const Vector& b, int iters,
                          double residual_tol) {
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = b;
  double rdotr = r.squaredNorm();
  for (int i = 0; i < iters; ++i) {
    if (std::sqrt(rdotr) < residual_tol) break;
    const Vector z = matvec(p);
    const double pz = p.dot(z);
    if (!std::isfinite(pz) || !z.allFinite()) {
      throw NumericError("conjugate_gradient: non-finite matvec at iteration " +
                         std::to_string(i));
    }
    if (pz <= 0.0) {
      throw NumericError("conjugate_gradient: operator is not positive definite (p'Ap = " +
                         std::to_string(pz) + ")");
    }
    const double alpha = rdotr / pz;
    x += alpha * p;
    r -= alpha * z;
    const double new_rdotr = r.squaredNorm();
    p = r + (new_rdotr / rdotr) * p;
    rdotr = new_rdotr;
  }
  if (!x.allFinite()) throw NumericError("conjugate_gradient: non-finite solution");
  return x;
}

void PolicyBatch::validate(const ParameterVector& policy) const {
  const auto n = inputs.cols();
  const auto act = static_cast<Eigen::Index>(policy.spec.output_dim);
  require(n > 0, "PolicyBatch: empty batch");
  require(static_cast<std::size_t>(inputs.rows()) == policy.spec.input_dim,
          "PolicyBatch: feature dimension does not match the policy");
  require(policy.log_std.size() == act, "PolicyBatch: policy has no log-std per action");
  require(offsets.rows() == act && offsets.cols() == n, "PolicyBatch: offsets shape");
  require(actions.rows() == act && actions.cols() == n, "PolicyBatch: actions shape");
  require(old_log_probs.size() == n && advantages.size() == n,
          "PolicyBatch: per-sample arrays differ in length");
}

double surrogate_loss(const ParameterVector& policy, const PolicyBatch& batch,
                      double ent_coeff) {
  batch.validate(policy);
  const Matrix means = policy_means(policy, batch);
  const Vector ratio =
      (log_probs(means, policy.log_std, batch.actions) - batch.old_log_probs).array().exp();
  if (!ratio.allFinite()) throw NumericError("surrogate_loss: non-finite ratio");
  return (ratio.array() * batch.advantages.array()).mean() + ent_coeff * entropy(policy.log_std);
}

Vector surrogate_gradient(const ParameterVector& policy, const PolicyBatch& batch,
                          double ent_coeff) {
  batch.validate(policy);
  return TrustRegion(policy, batch, ent_coeff).gradient();
}

double mean_kl(const ParameterVector& old_policy, const ParameterVector& new_policy,
               const PolicyBatch& batch) {
  batch.validate(old_policy);
  batch.validate(new_policy);
  return batch_kl(policy_means(old_policy, batch), old_policy.log_std,
                  policy_means(new_policy, batch), new_policy.log_std);
}

Vector fisher_vector_product(const ParameterVector& policy, const PolicyBatch& batch,
                             const Vector& v, double damping) {
  batch.validate(policy);
  require(static_cast<std::size_t>(v.size()) == policy.flat_size(),
          "fisher_vector_product: vector length does not match parameters");
  return TrustRegion(policy, batch, 0.0).fvp(v, damping);
}

StepResult trpo_step(const ParameterVector& policy, const PolicyBatch& batch,
                     const TrpoConfig& cfg) {
  batch.validate(policy);
  StepResult result{policy, {}};
  StepReport& report = result.report;

  const TrustRegion region(policy, batch, cfg.ent_coeff);
  const Vector grad = region.gradient();
  if (!grad.allFinite()) {
    report.skipped = true;
    report.note = "non-finite gradient";
    return result;
  }
  if (grad.squaredNorm() == 0.0) {
    report.note = "zero gradient";
    return result;
  }

  Vector direction;
  try {
    direction = conjugate_gradient(
        [&](const Vector& v) { return region.fvp(v, cfg.cg_damping); }, grad,
        cfg.cg_iters, cfg.cg_residual_tol);
  } catch (const NumericError& e) {
    report.skipped = true;
    report.note = e.what();
    return result;
  }
  const double shs = direction.dot(region.fvp(direction, cfg.cg_damping));
  if (!std::isfinite(shs) || shs <= 0.0) {
    report.skipped = true;
    report.note = "non-positive curvature along step";
    return result;
  }
  const Vector full_step = direction * std::sqrt(2.0 * cfg.max_kl / shs);
  report.expected_improvement = grad.dot(full_step);

  const Vector theta = policy.flatten();
  const double surr_before = region.evaluate(policy).first;
  double fraction = 1.0;
  for (int k = 0; k < cfg.backtrack_steps; ++k) {
    ParameterVector candidate =
        ParameterVector::unflatten(policy.spec, static_cast<std::size_t>(policy.log_std.size()),
                                   theta + fraction * full_step);
    const auto [surr, kl] = region.evaluate(candidate);
    const double improve = surr - surr_before;
    if (std::isfinite(surr) && std::isfinite(kl) && kl <= cfg.max_kl && improve > 0.0) {
      result.params = std::move(candidate);
      report.accepted = true;
      report.kl = kl;
      report.improvement = improve;
      report.backtracks = k;
      return result;
    }
    fraction *= cfg.backtrack_ratio;
  }
  report.backtracks = cfg.backtrack_steps;
  report.note = "line search exhausted";
  return result;
}

double value_mse(const ParameterVector& critic, const ValueBatch& batch) {
  const Matrix pred = nnet::forward(critic, batch.inputs);
  const Vector err = pred.row(0).transpose() + batch.offsets - batch.returns;
  return err.squaredNorm() / static_cast<double>(err.size());
}

ValueFitResult fit_value(const ParameterVector& critic, const ValueBatch& batch,
                         const TrpoConfig& cfg, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  require(n > 0, "fit_value: empty batch");
  require(critic.spec.output_dim == 1, "fit_value: critic must have one output");
  require(batch.offsets.size() == n && batch.returns.size() == n,
          "fit_value: per-sample arrays differ in length");
  ValueFitResult out{critic, value_mse(critic, batch), 0.0};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index mb = cfg.vf_minibatch;
  Matrix x;
  Vector target;
  nnet::ForwardCache cache;
  for (int epoch = 0; epoch < cfg.vf_iters; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += mb) {
      const Eigen::Index m = std::min(mb, n - start);
      x.resize(batch.inputs.rows(), m);
      target.resize(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
        x.col(j) = batch.inputs.col(src);
        target[j] = batch.returns[src] - batch.offsets[src];
      }
      const Matrix pred = nnet::forward(out.params, x, &cache);
      const Matrix g = (2.0 / static_cast<double>(m)) * (pred.row(0) - target.transpose());
      out.params.values -= cfg.vf_step * nnet::backward(out.params, cache, g);
    }
  }
  if (!out.params.all_finite()) throw NumericError("fit_value: parameters diverged");
  out.mse_after = value_mse(out.params, batch);
  return out;
}

}  // namespace iatrpo::trpo
