#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nsde/evaluation.hpp"
#include "nsde/rng.hpp"
#include "nsde/solver.hpp"

#include <cmath>

using namespace nsde;

TEST_CASE("mse averages squared residuals over points and dimensions") {
  std::vector<GaussianState> pred;
  pred.emplace_back(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  pred.emplace_back(Eigen::VectorXd::Ones(2), Eigen::MatrixXd::Identity(2, 2));
  Eigen::MatrixXd truth(2, 2);
  truth << 1.0, 0.0,  // residual (1, 0)
      1.0, 3.0;       // residual (0, 2)
  CHECK(mse(pred, truth) == doctest::Approx((1.0 + 0.0 + 0.0 + 4.0) / 4.0));
}

TEST_CASE("nll equals the negative log density of the predictive gaussian") {
  Eigen::VectorXd mean(2);
  mean << 1.0, -1.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.5, 0.5, 1.5;
  Eigen::VectorXd y(2);
  y << 0.3, 0.4;
  std::vector<GaussianState> pred{GaussianState(mean, cov)};
  Eigen::MatrixXd truth = y.transpose();
  const Eigen::VectorXd r = y - mean;
  const double quad = r.transpose() * cov.inverse() * r;
  const double want =
      0.5 * (quad + std::log(cov.determinant()) + 2.0 * std::log(2.0 * M_PI));
  CHECK(nll(pred, truth) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("coverage endpoints are pinned") {
  std::vector<GaussianState> pred{
      GaussianState(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1))};
  std::vector<Eigen::VectorXd> truth{Eigen::VectorXd::Ones(1)};
  CHECK(empirical_coverage(pred, truth, 0.0) == 0.0);
  CHECK(empirical_coverage(pred, truth, 1.0) == 1.0);
}

TEST_CASE("ecpe of a degenerate wrong-mean prediction is one half") {
  // Zero covariance and a wrong mean: never covered at interior levels, so
  // every interior level contributes exactly its nominal value.
  std::vector<GaussianState> pred{
      GaussianState(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2))};
  std::vector<Eigen::VectorXd> truth{Eigen::VectorXd::Ones(2)};
  CHECK(ecpe(pred, truth) == 0.5);
}

TEST_CASE("ecpe of a perfectly calibrated forecast is near zero") {
  Rng rng(31);
  Eigen::VectorXd mean(2);
  mean << 0.5, -0.2;
  Eigen::MatrixXd g(2, 2);
  g << 1.0, 0.0, 0.4, 0.8;
  GaussianState marginal(mean, g * g.transpose());
  Eigen::MatrixXd samples = sample_gaussian(marginal, 20000, rng);
  std::vector<GaussianState> pred;
  std::vector<Eigen::VectorXd> truth;
  for (int i = 0; i < samples.rows(); ++i) {
    pred.push_back(marginal);
    truth.push_back(samples.row(i).transpose());
  }
  CalibrationReport report = calibration_report(pred, truth);
  CHECK(report.ecpe < 0.01);
  CHECK(report.empirical[0] == 0.0);
  CHECK(report.empirical[kCalibrationLevels - 1] == 1.0);
  // Empirical coverage grows with the nominal level.
  for (int i = 1; i < kCalibrationLevels; ++i) {
    CHECK(report.empirical[i] >= report.empirical[i - 1]);
  }
}

TEST_CASE("overconfident forecasts undercover and inflate ecpe") {
  Rng rng(32);
  GaussianState truth_dist(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  GaussianState narrow(Eigen::VectorXd::Zero(1), 0.04 * Eigen::MatrixXd::Identity(1, 1));
  Eigen::MatrixXd samples = sample_gaussian(truth_dist, 5000, rng);
  std::vector<GaussianState> pred;
  std::vector<Eigen::VectorXd> truth;
  for (int i = 0; i < samples.rows(); ++i) {
    pred.push_back(narrow);
    truth.push_back(samples.row(i).transpose());
  }
  CHECK(ecpe(pred, truth) > 0.3);
}
