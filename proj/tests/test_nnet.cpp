#include <doctest.h>

#include <cmath>
#include <random>

#include "iatrpo/error.hpp"
#include "iatrpo/nnet.hpp"

using namespace iatrpo;
using namespace iatrpo::nnet;

namespace {

// Straight loops over the documented flat layout.
Vector naive_forward(const MlpSpec& spec, const Vector& flat, const Vector& x) {
  std::vector<std::size_t> dims = {spec.input_dim};
  for (auto h : spec.hidden_dims) dims.push_back(h);
  dims.push_back(spec.output_dim);
  Vector a = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    Vector z(static_cast<Eigen::Index>(out));
    for (std::size_t o = 0; o < out; ++o) {
      double s = flat[static_cast<Eigen::Index>(off + in * out + o)];
      for (std::size_t i = 0; i < in; ++i) {
        s += flat[static_cast<Eigen::Index>(off + o * in + i)] * a[static_cast<Eigen::Index>(i)];
      }
      z[static_cast<Eigen::Index>(o)] = s;
    }
    off += in * out + out;
    if (l + 2 < dims.size()) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = z[k] > 0.0 ? z[k] : 0.0;
    }
    a = z;
  }
  return a;
}

ParameterVector random_params(const MlpSpec& spec, std::uint64_t seed, std::size_t log_std_dim = 0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  ParameterVector p = ParameterVector::zeros(spec, log_std_dim);
  for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] = n(rng);
  for (Eigen::Index i = 0; i < p.log_std.size(); ++i) p.log_std[i] = n(rng);
  return p;
}

Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("default spec has two hidden layers of 128 relu units") {
  const MlpSpec s = MlpSpec::with_defaults(7, 2);
  CHECK(s.hidden_dims == std::vector<std::size_t>{128, 128});
  CHECK(s.activation == Activation::kRelu);
  CHECK(s.num_params() == (7 + 1) * 128 + (128 + 1) * 128 + (128 + 1) * 2);
}

TEST_CASE("parameter count is the sum of (fan_in + 1) * fan_out") {
  MlpSpec s{3, {5, 4, 6}, 2, Activation::kRelu};
  CHECK(s.num_params() == 4 * 5 + 6 * 4 + 5 * 6 + 7 * 2);
  CHECK(s.layer_offset(0) == 0);
  CHECK(s.layer_offset(1) == 20);
  CHECK(s.layer_offset(3) == 20 + 24 + 30);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS(MlpSpec({0, {4}, 1, Activation::kRelu}).validate(), ContractError);
  CHECK_THROWS_AS(MlpSpec({2, {}, 1, Activation::kRelu}).validate(), ContractError);
  CHECK_THROWS_AS(MlpSpec({2, {4, 0}, 1, Activation::kRelu}).validate(), ContractError);
  CHECK_THROWS_AS(MlpSpec({2, {4}, 0, Activation::kRelu}).validate(), ContractError);
}

TEST_CASE("non-finite parameters fail validation") {
  ParameterVector p = ParameterVector::zeros(MlpSpec{2, {3}, 1, Activation::kRelu}, 1);
  CHECK(p.all_finite());
  p.log_std[0] = std::nan("");
  CHECK_FALSE(p.all_finite());
  CHECK_THROWS_AS(p.validate(), NumericError);
}

TEST_CASE("flatten and unflatten round trip") {
  const MlpSpec s{4, {6, 5}, 2, Activation::kRelu};
  const ParameterVector p = random_params(s, 11, 2);
  const Vector flat = p.flatten();
  CHECK(static_cast<std::size_t>(flat.size()) == s.num_params() + 2);
  const ParameterVector q = ParameterVector::unflatten(s, 2, flat);
  CHECK(q.values == p.values);
  CHECK(q.log_std == p.log_std);
  CHECK_THROWS_AS(ParameterVector::unflatten(s, 2, flat.head(flat.size() - 1)), ContractError);
}

TEST_CASE("normc init gives every unit the requested weight norm") {
  const MlpSpec s{5, {8, 8}, 3, Activation::kRelu};
  Rng rng(3);
  const ParameterVector p = init_params(s, rng, 1.0, 0.01, 3);
  for (std::size_t l = 0; l < s.num_layers(); ++l) {
    const std::size_t in = s.fan_in(l), out = s.fan_out(l), off = s.layer_offset(l);
    const double want = l + 1 == s.num_layers() ? 0.01 : 1.0;
    for (std::size_t o = 0; o < out; ++o) {
      const double norm = p.values.segment(static_cast<Eigen::Index>(off + o * in), static_cast<Eigen::Index>(in)).norm();
      CHECK(norm == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(p.values.segment(static_cast<Eigen::Index>(off + in * out), static_cast<Eigen::Index>(out)).isZero());
  }
  CHECK(p.log_std.isZero());
}

TEST_CASE("batched forward matches the naive loop") {
  const MlpSpec s{4, {7, 6}, 3, Activation::kRelu};
  const ParameterVector p = random_params(s, 5);
  Rng rng(9);
  Matrix x(4, 10);
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) = random_vector(4, rng);
  const Matrix y = forward(p, x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Vector want = naive_forward(s, p.values, x.col(j));
    CHECK((y.col(j) - want).cwiseAbs().maxCoeff() < 1e-12);
    const Vector single = mlp_forward(p, std::span<const double>(x.col(j).data(), 4));
    CHECK((single - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward matches central finite differences") {
  const MlpSpec s{3, {6, 5}, 2, Activation::kRelu};
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ParameterVector p = random_params(s, 100 + seed);
    Rng rng(seed);
    Matrix x(3, 5), g(2, 5);
    for (Eigen::Index j = 0; j < 5; ++j) {
      x.col(j) = random_vector(3, rng);
      g.col(j) = random_vector(2, rng);
    }
    ForwardCache cache;
    forward(p, x, &cache);
    const Vector grad = backward(p, cache, g);
    auto objective = [&](const ParameterVector& q) { return (forward(q, x).array() * g.array()).sum(); };
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < p.values.size(); ++k) {
      ParameterVector a = p, b = p;
      a.values[k] += h;
      b.values[k] -= h;
      const double fd = (objective(a) - objective(b)) / (2 * h);
      if (std::abs(fd) > 1e-6 || std::abs(grad[k]) > 1e-6) worst = std::max(worst, rel_err(fd, grad[k]));
    }
    CHECK(worst < 1e-4);
    const Vector single = mlp_backward(p, std::span<const double>(x.col(0).data(), 3),
                                       std::span<const double>(g.col(0).data(), 2));
    ForwardCache c0;
    forward(p, x.leftCols(1), &c0);
    CHECK((single - backward(p, c0, g.leftCols(1))).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("jvp matches a finite-difference directional derivative") {
  const MlpSpec s{3, {6, 5}, 2, Activation::kRelu};
  const ParameterVector p = random_params(s, 77);
  Rng rng(1);
  Matrix x(3, 6);
  for (Eigen::Index j = 0; j < 6; ++j) x.col(j) = random_vector(3, rng);
  const Vector dir = random_vector(p.values.size(), rng);
  ForwardCache cache;
  forward(p, x, &cache);
  const Matrix jv = jvp(p, cache, dir);
  const double h = 1e-6;
  ParameterVector a = p, b = p;
  a.values += h * dir;
  b.values -= h * dir;
  const Matrix fd = (forward(a, x) - forward(b, x)) / (2 * h);
  CHECK((jv - fd).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("gaussian log-prob, entropy and KL match closed forms") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    GaussianAction p{random_vector(2, rng), random_vector(2, rng, 0.3)};
    GaussianAction q{random_vector(2, rng), random_vector(2, rng, 0.3)};
    const Vector a = random_vector(2, rng);
    double lp = 0.0, ent = 0.0, kl = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double sp = std::exp(p.log_std[d]), sq = std::exp(q.log_std[d]);
      const double z = (a[d] - p.mean[d]) / sp;
      lp += -0.5 * z * z - std::log(sp) - 0.5 * std::log(2 * M_PI);
      ent += 0.5 * std::log(2 * M_PI * M_E * sp * sp);
      kl += std::log(sq / sp) + (sp * sp + (p.mean[d] - q.mean[d]) * (p.mean[d] - q.mean[d])) / (2 * sq * sq) - 0.5;
    }
    CHECK(gaussian_log_prob(p, a) == doctest::Approx(lp).epsilon(1e-12));
    CHECK(gaussian_entropy(p) == doctest::Approx(ent).epsilon(1e-12));
    CHECK(gaussian_kl(p, q) == doctest::Approx(kl).epsilon(1e-12));
    CHECK(gaussian_kl(p, q) >= 0.0);
    CHECK(gaussian_kl(p, p) == doctest::Approx(0.0));
  }
}

TEST_CASE("gaussian helpers reject mismatched dimensions") {
  GaussianAction g{Vector::Zero(2), Vector::Zero(3)};
  CHECK_THROWS_AS(gaussian_entropy(g), ContractError);
  GaussianAction ok{Vector::Zero(2), Vector::Zero(2)};
  CHECK_THROWS_AS(gaussian_log_prob(ok, Vector::Zero(3)), ContractError);
}
