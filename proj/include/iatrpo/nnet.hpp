#pragma once

// Feed-forward ReLU networks over flat parameter vectors, with analytic
// reverse-mode and forward-mode derivatives, plus the diagonal Gaussian
// policy head used by every actor.
//
// Flat layout: for each layer in order, the weight matrix in row-major order
// (fan_out rows of fan_in entries) followed by the fan_out biases. Policy
// networks append their per-dimension log-std entries after the last layer.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "iatrpo/rng.hpp"

namespace iatrpo::nnet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { kRelu };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims = {128, 128};
  std::size_t output_dim = 1;
  Activation activation = Activation::kRelu;

  static MlpSpec with_defaults(std::size_t input_dim, std::size_t output_dim);

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  // Offset of layer `layer`'s weight block inside the flat vector.
  std::size_t layer_offset(std::size_t layer) const;
  std::size_t num_params() const;

  // Throws ContractError when a dimension is zero or there is no hidden layer.
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

struct ParameterVector {
  MlpSpec spec;
  Vector values;
  Vector log_std;  // empty for value networks

  static ParameterVector zeros(const MlpSpec& spec, std::size_t log_std_dim = 0);

  std::size_t flat_size() const {
    return static_cast<std::size_t>(values.size() + log_std.size());
  }
  Vector flatten() const;
  static ParameterVector unflatten(const MlpSpec& spec, std::size_t log_std_dim,
                                   const Vector& flat);

  bool all_finite() const;
  void validate() const;
};

// Weights of each unit drawn from N(0,1) and rescaled to norm `scale`; the
// output layer uses `output_scale` instead. Biases and log-std start at zero.
ParameterVector init_params(const MlpSpec& spec, Rng& rng,
                            double hidden_scale, double output_scale,
                            std::size_t log_std_dim = 0);

// Pre-activations and activations of one batched forward pass. Column j of
// each matrix belongs to sample j.
struct ForwardCache {
  std::vector<Matrix> activations;  // activations[0] is the input batch
  std::vector<Matrix> pre;          // pre-activation of every layer
  const Matrix& output() const { return pre.back(); }
};

// inputs: input_dim x n. Returns output_dim x n.
Matrix forward(const ParameterVector& params, const Matrix& inputs,
               ForwardCache* cache = nullptr);

// Gradient of sum_j <output_grad.col(j), output.col(j)> with respect to the
// network values (not log-std).
Vector backward(const ParameterVector& params, const ForwardCache& cache,
                const Matrix& output_grad);

// Directional derivative of every output along `direction` (a values-sized
// vector): output_dim x n.
Matrix jvp(const ParameterVector& params, const ForwardCache& cache,
           const Vector& direction);

// Same outputs as forward, but every column is evaluated on its own so the
// result for one sample is bit-identical whatever else is in the batch.
Matrix forward_columns(const ParameterVector& params, const Matrix& inputs);

Vector mlp_forward(const ParameterVector& params, std::span<const double> input);
Vector mlp_backward(const ParameterVector& params, std::span<const double> input,
                    std::span<const double> output_grad);

struct GaussianAction {
  Vector mean;
  Vector log_std;
};

double gaussian_log_prob(const GaussianAction& g, const Vector& action);
double gaussian_kl(const GaussianAction& p, const GaussianAction& q);
double gaussian_entropy(const GaussianAction& g);

}  // namespace iatrpo::nnet
