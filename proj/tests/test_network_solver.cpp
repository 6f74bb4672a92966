#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nsde/serialization.hpp"
#include "nsde/solver.hpp"

#include <cstdio>
#include <fstream>

using namespace nsde;

namespace {

NetworkSpec linear_network(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  NetworkSpec net;
  net.input_dim = static_cast<int>(w.cols());
  net.output_dim = static_cast<int>(w.rows());
  LayerSpec layer;
  layer.kind = LayerKind::Affine;
  layer.weight = w;
  layer.bias = b;
  net.layers.push_back(std::move(layer));
  return net;
}

NetworkSpec small_mlp(int in, int hidden, int out, std::uint64_t seed, bool dropout) {
  Rng rng(seed);
  auto randm = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.normal() / std::sqrt(static_cast<double>(c));
    return m;
  };
  NetworkSpec net;
  net.input_dim = in;
  net.output_dim = out;
  LayerSpec l1;
  l1.kind = LayerKind::Affine;
  l1.weight = randm(hidden, in);
  l1.bias = 0.1 * randm(hidden, 1);
  net.layers.push_back(l1);
  LayerSpec relu_l;
  relu_l.kind = LayerKind::Relu;
  net.layers.push_back(relu_l);
  if (dropout) {
    LayerSpec dl;
    dl.kind = LayerKind::Dropout;
    dl.keep_prob = 0.8;
    net.layers.push_back(dl);
  }
  LayerSpec l2;
  l2.kind = LayerKind::Affine;
  l2.weight = randm(out, hidden);
  l2.bias = 0.1 * randm(out, 1);
  net.layers.push_back(l2);
  return net;
}

}  // namespace

TEST_CASE("vmm through affine layers is exact") {
  Eigen::MatrixXd w1(3, 2), w2(2, 3);
  w1 << 1.0, -0.5, 0.2, 0.7, -1.1, 0.4;
  w2 << 0.3, 0.5, -0.2, 1.2, 0.1, 0.6;
  NetworkSpec net;
  net.input_dim = 2;
  net.output_dim = 2;
  LayerSpec a1;
  a1.kind = LayerKind::Affine;
  a1.weight = w1;
  a1.bias = Eigen::MatrixXd::Constant(3, 1, 0.5);
  LayerSpec a2;
  a2.kind = LayerKind::Affine;
  a2.weight = w2;
  a2.bias = Eigen::MatrixXd::Constant(2, 1, -0.25);
  net.layers = {a1, a2};
  Eigen::VectorXd mean(2);
  mean << 0.4, -1.2;
  Eigen::MatrixXd cov(2, 2);
  cov << 0.6, 0.2, 0.2, 0.9;
  GaussianState out = vmm_forward(net, GaussianState(mean, cov));
  Eigen::MatrixXd w = w2 * w1;
  Eigen::VectorXd want_mean = w * mean + w2 * a1.bias.col(0) + a2.bias.col(0);
  Eigen::MatrixXd want_cov = w * cov * w.transpose();
  CHECK((out.mean - want_mean).norm() < 1e-13);
  CHECK((out.cov - want_cov).norm() < 1e-13);
}

TEST_CASE("stein cross covariance is exact for a linear drift") {
  // For f(z) = W z + b: Cov[z, f] = Sigma W^T, and the expected jacobian is W.
  Eigen::MatrixXd w(2, 2);
  w << 0.5, -0.3, 0.8, 0.1;
  Eigen::VectorXd b(2);
  b << 0.2, -0.1;
  NsdeModel model;
  model.latent_dim = 2;
  model.drift = linear_network(w, b);
  Eigen::VectorXd mean(2);
  mean << 1.0, 2.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.3, 0.3, 0.7;
  PlainCtx ctx{nullptr};
  GaussianT<Eigen::MatrixXd> state{mean, cov};
  DriftMoments<Eigen::MatrixXd> dm = drift_moments(model.drift, state, Eigen::VectorXd(), ctx);
  CHECK((dm.jacobian - w).norm() < 1e-14);
  CHECK((stein_cross_cov(cov, dm.jacobian) - cov * w.transpose()).norm() < 1e-14);
}

TEST_CASE("bmm step reproduces the linear-gaussian recursion") {
  Eigen::MatrixXd w(2, 2);
  w << -0.5, 0.2, 0.1, -0.8;
  Eigen::VectorXd b(2);
  b << 0.3, -0.2;
  NsdeModel model;
  model.latent_dim = 2;
  model.drift = linear_network(w, b);
  const double dt = 0.01;
  GaussianState state(Eigen::VectorXd::Ones(2), Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd mu = state.mean;
  Eigen::MatrixXd sigma = state.cov;
  for (int k = 0; k < 100; ++k) {
    state = bmm_step(model, state, Eigen::VectorXd(), dt);
    mu = mu + (w * mu + b) * dt;
    Eigen::MatrixXd cross = sigma * w.transpose();
    sigma = sigma + (w * sigma * w.transpose()) * dt * dt + (cross + cross.transpose()) * dt;
  }
  CHECK((state.mean - mu).norm() < 1e-12);
  CHECK((state.cov - sigma).norm() < 1e-12);
}

TEST_CASE("cubature step is exact for linear drift") {
  Eigen::MatrixXd w(2, 2);
  w << -0.4, 0.2, 0.3, -0.6;
  Eigen::VectorXd b(2);
  b << 0.1, 0.2;
  NsdeModel model;
  model.latent_dim = 2;
  model.drift = linear_network(w, b);
  Eigen::VectorXd mean(2);
  mean << 0.5, -0.5;
  Eigen::MatrixXd cov(2, 2);
  cov << 0.8, 0.2, 0.2, 0.5;
  const double dt = 0.05;
  GaussianState out = cubature_step(model, GaussianState(mean, cov), Eigen::VectorXd(), dt, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2) + w * dt;
  CHECK((out.mean - (a * mean + b * dt)).norm() < 1e-12);
  CHECK((out.cov - a * cov * a.transpose()).norm() < 1e-12);
  CHECK_THROWS_AS(
      cubature_step(model, GaussianState(mean, cov), Eigen::VectorXd(), dt, -2.0),
      std::invalid_argument);
}

TEST_CASE("monte carlo rollouts are deterministic and order independent") {
  NsdeModel model;
  model.latent_dim = 2;
  model.drift = small_mlp(2, 8, 2, 5, false);
  model.diffusion = small_mlp(2, 8, 2, 6, false);
  Eigen::MatrixXd init = Eigen::MatrixXd::Zero(16, 2);
  ParticleRollout r1 = mc_rollout(model, init, Eigen::MatrixXd(), 0.01, 20, 99);
  ParticleRollout r2 = mc_rollout(model, init, Eigen::MatrixXd(), 0.01, 20, 99);
  CHECK((r1.states.back() - r2.states.back()).norm() == 0.0);
  // The first 8 particles of a larger ensemble match a smaller run exactly.
  ParticleRollout r3 = mc_rollout(model, init.topRows(8), Eigen::MatrixXd(), 0.01, 20, 99);
  CHECK((r1.states.back().topRows(8) - r3.states.back()).norm() == 0.0);
  ParticleRollout r4 = mc_rollout(model, init, Eigen::MatrixXd(), 0.01, 20, 100);
  CHECK((r1.states.back() - r4.states.back()).norm() != 0.0);
}

TEST_CASE("euler-maruyama matches the linear sde variance growth") {
  // dz = -z dt + dw discretized: var_{k+1} = (1-dt)^2 var_k + dt.
  NsdeModel model;
  model.latent_dim = 1;
  model.drift = linear_network(-Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
  NetworkSpec unit;
  unit.input_dim = 1;
  unit.output_dim = 1;
  LayerSpec l;
  l.kind = LayerKind::Affine;
  l.weight = Eigen::MatrixXd::Zero(1, 1);
  l.bias = Eigen::MatrixXd::Ones(1, 1);
  unit.layers.push_back(l);
  model.diffusion = unit;
  const double dt = 0.05;
  const int steps = 40;
  ParticleRollout r = mc_rollout(model, Eigen::MatrixXd::Zero(200000, 1), Eigen::MatrixXd(),
                                 dt, steps, 4);
  double want = 0.0;
  for (int k = 0; k < steps; ++k) want = (1.0 - dt) * (1.0 - dt) * want + dt;
  GaussianState got = ensemble_moments(r.states.back());
  CHECK(std::fabs(got.mean(0)) < 0.01);
  CHECK(got.cov(0, 0) == doctest::Approx(want).epsilon(0.02));
}

TEST_CASE("evaluation counters are exact") {
  NsdeModel model;
  model.latent_dim = 2;
  model.drift = small_mlp(2, 8, 2, 7, true);
  model.diffusion = small_mlp(2, 8, 2, 8, false);
  const int steps = 13;

  EvalCounters mc;
  mc_rollout(model, Eigen::MatrixXd::Zero(5, 2), Eigen::MatrixXd(), 0.01, steps, 1, &mc);
  CHECK(mc.drift_evals == 5 * steps);
  CHECK(mc.diffusion_evals == 5 * steps);

  EvalCounters bmm;
  GaussianState init(Eigen::VectorXd::Zero(2), 0.01 * Eigen::MatrixXd::Identity(2, 2));
  bmm_rollout(model, init, Eigen::MatrixXd(), 0.01, steps, nullptr, &bmm);
  CHECK(bmm.drift_evals == steps);
  CHECK(bmm.diffusion_evals == steps);

  EvalCounters cub;
  cubature_rollout(model, init, Eigen::MatrixXd(), 0.01, steps, 1.0, nullptr, &cub);
  CHECK(cub.drift_evals == static_cast<std::uint64_t>((2 * 2 + 1) * steps));
  CHECK(cub.diffusion_evals == static_cast<std::uint64_t>((2 * 2 + 1) * steps));
}

TEST_CASE("control inputs shift the drift but carry no covariance") {
  // Drift [z; u] -> z + u through a single affine layer.
  Eigen::MatrixXd w(1, 2);
  w << 1.0, 1.0;
  NsdeModel model;
  model.latent_dim = 1;
  model.control_dim = 1;
  model.drift = linear_network(w, Eigen::VectorXd::Zero(1));
  GaussianState state(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  Eigen::MatrixXd controls = Eigen::MatrixXd::Constant(1, 1, 2.0);
  std::vector<GaussianState> r = bmm_rollout(model, state, controls, 0.1, 1);
  CHECK(r.back().mean(0) == doctest::Approx(0.2));  // (0 + 2) * dt
  // Covariance follows the latent-only jacobian (here 1): (1+dt)^2 * var.
  CHECK(r.back().cov(0, 0) == doctest::Approx(1.21));
}

TEST_CASE("network json round trip is bit exact") {
  NetworkSpec net = small_mlp(3, 5, 2, 11, true);
  nlohmann::json j = network_to_json(net);
  std::string text = j.dump();
  NetworkSpec back = network_from_json(nlohmann::json::parse(text));
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].kind == net.layers[i].kind);
    if (net.layers[i].kind == LayerKind::Affine) {
      CHECK(back.layers[i].weight == net.layers[i].weight);
      CHECK(back.layers[i].bias == net.layers[i].bias);
    }
    if (net.layers[i].kind == LayerKind::Dropout) {
      CHECK(back.layers[i].keep_prob == net.layers[i].keep_prob);
    }
  }
}

TEST_CASE("gaussian rollout csv has the documented layout") {
  std::vector<GaussianState> rollout;
  Eigen::VectorXd mean(2);
  mean << 1.0, 2.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 4.0, 1.0, 1.0, 9.0;
  rollout.emplace_back(mean, cov);
  const std::string path = "/tmp/nsde_test_rollout.csv";
  save_gaussian_rollout_csv(rollout, 0.5, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t,mean_1,mean_2,cov_11,cov_12,cov_22");
  CHECK(row == "0,1,2,4,1,9");
  std::remove(path.c_str());
}
