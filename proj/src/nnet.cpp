#include "iatrpo/nnet.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "iatrpo/error.hpp"

namespace iatrpo::nnet {
namespace {

using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw NumericError(std::string("non-finite ") + what);
  }
}

}  // namespace

MlpSpec MlpSpec::with_defaults(std::size_t input_dim, std::size_t output_dim) {
  MlpSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  return spec;
}

std::size_t MlpSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::fan_out(std::size_t layer) const {
  return layer + 1 == num_layers() ? output_dim : hidden_dims[layer];
}

std::size_t MlpSpec::layer_offset(std::size_t layer) const {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    offset += (fan_in(l) + 1) * fan_out(l);
  }
  return offset;
}

std::size_t MlpSpec::num_params() const { return layer_offset(num_layers()); }

void MlpSpec::validate() const {
  require(input_dim >= 1, "MlpSpec: input_dim must be >= 1");
  require(output_dim >= 1, "MlpSpec: output_dim must be >= 1");
  require(!hidden_dims.empty(), "MlpSpec: at least one hidden layer required");
  for (auto h : hidden_dims) require(h >= 1, "MlpSpec: hidden dims must be >= 1");
}

ParameterVector ParameterVector::zeros(const MlpSpec& spec,
                                       std::size_t log_std_dim) {
  spec.validate();
  ParameterVector p;
  p.spec = spec;
  p.values = Vector::Zero(static_cast<Eigen::Index>(spec.num_params()));
  p.log_std = Vector::Zero(static_cast<Eigen::Index>(log_std_dim));
  return p;
}

Vector ParameterVector::flatten() const {
  Vector flat(values.size() + log_std.size());
  flat << values, log_std;
  return flat;
}

ParameterVector ParameterVector::unflatten(const MlpSpec& spec,
                                           std::size_t log_std_dim,
                                           const Vector& flat) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.num_params());
  const auto k = static_cast<Eigen::Index>(log_std_dim);
  if (flat.size() != n + k) {
    throw ContractError("unflatten: expected " + std::to_string(n + k) +
                        " values, got " + std::to_string(flat.size()));
  }
  ParameterVector p;
  p.spec = spec;
  p.values = flat.head(n);
  p.log_std = flat.tail(k);
  return p;
}

bool ParameterVector::all_finite() const {
  return values.allFinite() && log_std.allFinite();
}

void ParameterVector::validate() const {
  spec.validate();
  require(static_cast<std::size_t>(values.size()) == spec.num_params(),
          "ParameterVector: value count does not match spec");
  if (!all_finite()) throw NumericError("ParameterVector: non-finite entries");
}

ParameterVector init_params(const MlpSpec& spec, Rng& rng, double hidden_scale,
                            double output_scale, std::size_t log_std_dim) {
  ParameterVector p = ParameterVector::zeros(spec, log_std_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.fan_in(l));
    const auto out = static_cast<Eigen::Index>(spec.fan_out(l));
    const double scale = l + 1 == spec.num_layers() ? output_scale : hidden_scale;
    Weights w(p.values.data() + spec.layer_offset(l), out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) w(r, c) = normal(rng);
      const double norm = w.row(r).norm();
      if (norm > 0.0) w.row(r) *= scale / norm;
    }
  }
  return p;
}

Matrix forward(const ParameterVector& params, const Matrix& inputs,
               ForwardCache* cache) {
  const MlpSpec& spec = params.spec;
  if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim) {
    throw ContractError("mlp forward: input has " + std::to_string(inputs.rows()) +
                        " rows, spec expects " + std::to_string(spec.input_dim));
  }
  if (static_cast<std::size_t>(params.values.size()) != spec.num_params()) {
    throw ContractError("mlp forward: parameter count does not match spec");
  }
  if (cache != nullptr) {
    cache->activations.assign(1, inputs);
    cache->pre.clear();
  }
  Matrix a = inputs;
  const std::size_t layers = spec.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(spec.fan_in(l));
    const auto out = static_cast<Eigen::Index>(spec.fan_out(l));
    const double* base = params.values.data() + spec.layer_offset(l);
    ConstWeights w(base, out, in);
    Eigen::Map<const Vector> b(base + out * in, out);
    Matrix z = w * a;
    z.colwise() += b;
    if (l + 1 == layers) {
      if (cache != nullptr) cache->pre.push_back(z);
      return z;
    }
    a = z.cwiseMax(0.0);
    if (cache != nullptr) {
      cache->pre.push_back(std::move(z));
      cache->activations.push_back(a);
    }
  }
  return a;  // unreachable: spec has at least one layer
}

Vector backward(const ParameterVector& params, const ForwardCache& cache,
                const Matrix& output_grad) {
  const MlpSpec& spec = params.spec;
  const std::size_t layers = spec.num_layers();
  require(cache.pre.size() == layers, "mlp backward: cache does not match spec");
  require(static_cast<std::size_t>(output_grad.rows()) == spec.output_dim &&
              output_grad.cols() == cache.pre.back().cols(),
          "mlp backward: output gradient shape mismatch");
  Vector grad = Vector::Zero(params.values.size());
  Matrix g = output_grad;
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(spec.fan_in(l));
    const auto out = static_cast<Eigen::Index>(spec.fan_out(l));
    const std::size_t offset = spec.layer_offset(l);
    Weights dw(grad.data() + offset, out, in);
    dw.noalias() = g * cache.activations[l].transpose();
    Eigen::Map<Vector>(grad.data() + offset + out * in, out) = g.rowwise().sum();
    if (l > 0) {
      ConstWeights w(params.values.data() + offset, out, in);
      Matrix upstream = w.transpose() * g;
      g = upstream.cwiseProduct(
          (cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return grad;
}

Matrix jvp(const ParameterVector& params, const ForwardCache& cache,
           const Vector& direction) {
  const MlpSpec& spec = params.spec;
  const std::size_t layers = spec.num_layers();
  require(cache.pre.size() == layers, "mlp jvp: cache does not match spec");
  require(direction.size() == params.values.size(),
          "mlp jvp: direction length does not match parameter count");
  const Eigen::Index n = cache.activations[0].cols();
  Matrix ra;  // tangent of the current activation; zero for the input
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(spec.fan_in(l));
    const auto out = static_cast<Eigen::Index>(spec.fan_out(l));
    const std::size_t offset = spec.layer_offset(l);
    ConstWeights dw(direction.data() + offset, out, in);
    Eigen::Map<const Vector> db(direction.data() + offset + out * in, out);
    Matrix rz = dw * cache.activations[l];
    if (l > 0) {
      ConstWeights w(params.values.data() + offset, out, in);
      rz.noalias() += w * ra;
    }
    rz.colwise() += db;
    if (l + 1 == layers) return rz;
    ra = rz.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
  }
  return Matrix::Zero(static_cast<Eigen::Index>(spec.output_dim), n);
}

Matrix forward_columns(const ParameterVector& params, const Matrix& inputs) {
  const MlpSpec& spec = params.spec;
  if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim) {
    throw ContractError("mlp forward: input has " + std::to_string(inputs.rows()) +
                        " rows, spec expects " + std::to_string(spec.input_dim));
  }
  if (static_cast<std::size_t>(params.values.size()) != spec.num_params()) {
    throw ContractError("mlp forward: parameter count does not match spec");
  }
  const std::size_t layers = spec.num_layers();
  Matrix out(static_cast<Eigen::Index>(spec.output_dim), inputs.cols());
  Vector a, z;
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    a = inputs.col(j);
    for (std::size_t l = 0; l < layers; ++l) {
      const auto in = static_cast<Eigen::Index>(spec.fan_in(l));
      const auto fo = static_cast<Eigen::Index>(spec.fan_out(l));
      const double* base = params.values.data() + spec.layer_offset(l);
      ConstWeights w(base, fo, in);
      z.noalias() = w * a;
      z += Eigen::Map<const Vector>(base + fo * in, fo);
      if (l + 1 < layers) a = z.cwiseMax(0.0);
    }
    out.col(j) = z;
  }
  return out;
}

Vector mlp_forward(const ParameterVector& params, std::span<const double> input) {
  Eigen::Map<const Vector> x(input.data(), static_cast<Eigen::Index>(input.size()));
  return forward_columns(params, Matrix(x));
}

Vector mlp_backward(const ParameterVector& params, std::span<const double> input,
                    std::span<const double> output_grad) {
  Eigen::Map<const Vector> x(input.data(), static_cast<Eigen::Index>(input.size()));
  Eigen::Map<const Vector> g(output_grad.data(),
                             static_cast<Eigen::Index>(output_grad.size()));
  ForwardCache cache;
  forward(params, Matrix(x), &cache);
  return backward(params, cache, Matrix(g));
}

double gaussian_log_prob(const GaussianAction& g, const Vector& action) {
  require(g.mean.size() == action.size() && g.log_std.size() == action.size(),
          "gaussian_log_prob: dimension mismatch");
  check_finite(g.mean, "gaussian mean");
  check_finite(g.log_std, "gaussian log-std");
  check_finite(action, "action");
  double lp = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double z = (action[i] - g.mean[i]) * std::exp(-g.log_std[i]);
    lp += -0.5 * z * z - g.log_std[i] - kHalfLog2Pi;
  }
  return lp;
}

double gaussian_kl(const GaussianAction& p, const GaussianAction& q) {
  require(p.mean.size() == q.mean.size() && p.log_std.size() == q.log_std.size() &&
              p.mean.size() == p.log_std.size(),
          "gaussian_kl: dimension mismatch");
  check_finite(p.mean, "gaussian mean");
  check_finite(q.mean, "gaussian mean");
  check_finite(p.log_std, "gaussian log-std");
  check_finite(q.log_std, "gaussian log-std");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
    const double var_p = std::exp(2.0 * p.log_std[i]);
    const double var_q = std::exp(2.0 * q.log_std[i]);
    const double dm = p.mean[i] - q.mean[i];
    kl += q.log_std[i] - p.log_std[i] + (var_p + dm * dm) / (2.0 * var_q) - 0.5;
  }
  return kl;
}

double gaussian_entropy(const GaussianAction& g) {
  require(g.mean.size() == g.log_std.size(), "gaussian_entropy: dimension mismatch");
  check_finite(g.log_std, "gaussian log-std");
  return g.log_std.sum() +
         static_cast<double>(g.log_std.size()) * (0.5 + kHalfLog2Pi);
}

}  // namespace iatrpo::nnet
