#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nsde/layers.hpp"
#include "nsde/rng.hpp"
#include "nsde/solver.hpp"

#include <cmath>

using namespace nsde;

namespace {

GaussianState gs(std::initializer_list<double> mean, std::initializer_list<double> cov_rm) {
  const int d = static_cast<int>(mean.size());
  Eigen::VectorXd m(d);
  int i = 0;
  for (double v : mean) m(i++) = v;
  Eigen::MatrixXd c(d, d);
  i = 0;
  for (double v : cov_rm) c(i / d, i % d) = v, ++i;
  return GaussianState(m, c);
}

/// Monte Carlo moments of relu(x), x ~ N(in), with a seeded stream.
GaussianState mc_relu_moments(const GaussianState& in, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd samples = sample_gaussian(in, n, rng);
  return ensemble_moments(samples.cwiseMax(0.0));
}

}  // namespace

TEST_CASE("affine moments are exact") {
  LayerSpec layer;
  layer.kind = LayerKind::Affine;
  layer.weight = Eigen::MatrixXd(2, 2);
  layer.weight << 1.0, 2.0, -0.5, 0.3;
  layer.bias = Eigen::MatrixXd(2, 1);
  layer.bias << 0.1, -0.2;
  GaussianState in = gs({1.0, -1.0}, {0.5, 0.1, 0.1, 0.8});
  GaussianState out = affine_moments(layer, in);
  Eigen::VectorXd want_mean = layer.weight * in.mean + layer.bias.col(0);
  Eigen::MatrixXd want_cov = layer.weight * in.cov * layer.weight.transpose();
  CHECK((out.mean - want_mean).norm() < 1e-14);
  CHECK((out.cov - want_cov).norm() < 1e-14);
}

TEST_CASE("relu moments match the standard normal closed form") {
  GaussianState out = relu_moments(gs({0.0}, {1.0}));
  CHECK(out.mean(0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
  CHECK(out.cov(0, 0) == doctest::Approx(0.3408450569081046).epsilon(1e-12));
}

TEST_CASE("relu moments match an independent reference implementation") {
  // Values computed externally by semi-analytic integration (abs err < 1e-12).
  {
    GaussianState out = relu_moments(gs({0.3, -0.5}, {1.0, 0.6, 0.6, 2.0}));
    CHECK(out.mean(0) == doctest::Approx(5.667612421172099e-01).epsilon(1e-10));
    CHECK(out.mean(1) == doctest::Approx(3.490886622301165e-01).epsilon(1e-10));
    CHECK(out.cov(0, 0) == doctest::Approx(4.667214892578729e-01).epsilon(1e-10));
    CHECK(out.cov(1, 1) == doctest::Approx(4.272663846190926e-01).epsilon(1e-10));
    CHECK(out.cov(0, 1) == doctest::Approx(1.522736001192854e-01).epsilon(1e-8));
    CHECK(out.cov(0, 1) == out.cov(1, 0));
  }
  {
    GaussianState out = relu_moments(gs({-1.2, 0.8}, {0.5, -0.3, -0.3, 0.9}));
    CHECK(out.mean(0) == doctest::Approx(1.302447368866606e-02).epsilon(1e-10));
    CHECK(out.mean(1) == doctest::Approx(9.055955605863661e-01).epsilon(1e-10));
    CHECK(out.cov(0, 0) == doctest::Approx(6.622500101325144e-03).epsilon(1e-10));
    CHECK(out.cov(1, 1) == doctest::Approx(6.247892906686515e-01).epsilon(1e-10));
    CHECK(out.cov(0, 1) == doctest::Approx(-8.632668657220744e-03).epsilon(1e-6));
  }
}

TEST_CASE("relu moments track seeded monte carlo over random inputs") {
  Rng rng(2024);
  const int n = 200000;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform() * 3.0);  // 2..4
    Eigen::VectorXd mean(d);
    for (int i = 0; i < d; ++i) mean(i) = 2.0 * rng.uniform() - 1.0;
    Eigen::MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    GaussianState in(mean, g * g.transpose() + 0.05 * Eigen::MatrixXd::Identity(d, d));
    GaussianState got = relu_moments(in);
    GaussianState ref = mc_relu_moments(in, n, 1000 + trial);
    const double scale = std::sqrt(in.cov.diagonal().maxCoeff());
    CHECK((got.mean - ref.mean).cwiseAbs().maxCoeff() < 0.02 * scale);
    CHECK((got.cov - ref.cov).cwiseAbs().maxCoeff() < 0.05 * scale * scale);
  }
}

TEST_CASE("dropout moments match the closed form") {
  // q=0.5 doubles the kept unit, so var(x*m/q) = B + (1-q)/q (B_ii + a_i^2).
  GaussianState out = dropout_moments(0.5, gs({1.0}, {1.0}));
  CHECK(out.mean(0) == doctest::Approx(1.0));
  CHECK(out.cov(0, 0) == doctest::Approx(3.0));
  // Off-diagonal entries are untouched.
  GaussianState out2 = dropout_moments(0.8, gs({1.0, 2.0}, {1.0, 0.3, 0.3, 2.0}));
  CHECK(out2.cov(0, 1) == doctest::Approx(0.3));
  CHECK(out2.cov(0, 0) == doctest::Approx(1.0 + 0.25 * (1.0 + 1.0)));
  CHECK(out2.cov(1, 1) == doctest::Approx(2.0 + 0.25 * (2.0 + 4.0)));
  CHECK_THROWS_AS(dropout_moments(0.0, gs({0.0}, {1.0})), std::invalid_argument);
}

TEST_CASE("dropout moments match seeded monte carlo") {
  const double q = 0.7;
  GaussianState in = gs({0.5, -1.0}, {1.0, 0.4, 0.4, 0.6});
  Rng rng(77);
  const int n = 400000;
  Eigen::MatrixXd samples = sample_gaussian(in, n, rng);
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < 2; ++j) {
      samples(s, j) = (rng.uniform() < q) ? samples(s, j) / q : 0.0;
    }
  }
  GaussianState ref = ensemble_moments(samples);
  GaussianState got = dropout_moments(q, in);
  CHECK((got.mean - ref.mean).cwiseAbs().maxCoeff() < 0.01);
  CHECK((got.cov - ref.cov).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("expected jacobians") {
  GaussianState in = gs({0.3, -0.5}, {1.0, 0.6, 0.6, 2.0});
  LayerSpec relu_layer;
  relu_layer.kind = LayerKind::Relu;
  Eigen::MatrixXd j = layer_expected_jacobian(relu_layer, in);
  // diag(Phi(mean / std)): E[relu'(x)] = P(x > 0).
  CHECK(j(0, 0) == doctest::Approx(0.6179114221889526).epsilon(1e-9));
  CHECK(j(1, 1) == doctest::Approx(0.3618368049158816).epsilon(1e-9));
  CHECK(j(0, 1) == 0.0);

  LayerSpec drop_layer;
  drop_layer.kind = LayerKind::Dropout;
  drop_layer.keep_prob = 0.5;
  CHECK(layer_expected_jacobian(drop_layer, in).isIdentity(1e-14));
}

TEST_CASE("taped kernels reproduce the plain values") {
  GaussianState in = gs({0.3, -0.5}, {1.0, 0.6, 0.6, 2.0});
  GaussianState plain = relu_moments(in);
  ad::Tape tape;
  AdCtx ctx{&tape, nullptr};
  GaussianT<ad::Value> lifted{tape.leaf(Eigen::MatrixXd(in.mean)), tape.leaf(in.cov)};
  GaussianT<ad::Value> taped = relu_moments(lifted, ctx);
  CHECK((taped.mean.val().col(0) - plain.mean).norm() < 1e-14);
  CHECK((taped.cov.val() - plain.cov).norm() < 1e-14);
}

TEST_CASE("relu moment gradients pass a finite-difference check") {
  Eigen::VectorXd mean(2);
  mean << 0.3, -0.5;
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.6, 0.6, 2.0;
  double err = ad::finite_difference_check(
      [](ad::Tape& tape, const std::vector<ad::Value>& p) {
        AdCtx ctx{&tape, nullptr};
        GaussianT<ad::Value> out = relu_moments(GaussianT<ad::Value>{p[0], p[1]}, ctx);
        return ad::add(ad::sum(out.mean), ad::sum(out.cov));
      },
      {Eigen::MatrixXd(mean), cov}, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("tanh layers are rejected by moment propagation") {
  LayerSpec layer;
  layer.kind = LayerKind::Tanh;
  PlainCtx ctx{nullptr};
  GaussianState in = gs({0.0}, {1.0});
  GaussianT<Eigen::MatrixXd> packed{in.mean, in.cov};
  CHECK_THROWS_AS(layer_moments(layer, packed, ctx), std::invalid_argument);
}
