#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nsde/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace nsde;

TEST_CASE("lotka-volterra generation is deterministic and in range") {
  Dataset a = generate_lotka_volterra(5, 2.0, 0.05, 1e-3, 42);
  Dataset b = generate_lotka_volterra(5, 2.0, 0.05, 1e-3, 42);
  REQUIRE(a.series.size() == 5);
  CHECK(a.dt == 0.05);
  for (std::size_t s = 0; s < a.series.size(); ++s) {
    CHECK(a.series[s].rows() == 41);
    CHECK(a.series[s].cols() == 2);
    CHECK(a.series[s] == b.series[s]);
    CHECK(a.series[s].minCoeff() >= 0.0);
    CHECK(a.series[s].maxCoeff() <= 1e3);
    // Initial states are inside [1, 4]^2.
    CHECK(a.series[s].row(0).minCoeff() >= 1.0);
    CHECK(a.series[s].row(0).maxCoeff() <= 4.0);
  }
  Dataset c = generate_lotka_volterra(5, 2.0, 0.05, 1e-3, 43);
  CHECK(a.series[0] != c.series[0]);
}

TEST_CASE("lotka-volterra increments have the specified noise covariance") {
  // One observation step per series; after removing the drift, increments are
  // approximately N(0, Q dt) with Q = [[.05,.03],[.03,.09]].
  const double dt = 0.01;
  Dataset data = generate_lotka_volterra(3000, 2.0 * dt, dt, 1e-3, 7);
  Eigen::MatrixXd residuals(3000, 2);
  for (int s = 0; s < 3000; ++s) {
    const Eigen::Vector2d x0 = data.series[s].row(0);
    Eigen::Vector2d f(2.0 * x0(0) - x0(0) * x0(1), x0(0) * x0(1) - 4.0 * x0(1));
    residuals.row(s) = data.series[s].row(1) - x0.transpose() - f.transpose() * dt;
  }
  Eigen::MatrixXd cov =
      residuals.transpose() * residuals / static_cast<double>(residuals.rows());
  CHECK(cov(0, 0) == doctest::Approx(0.05 * dt).epsilon(0.12));
  CHECK(cov(1, 1) == doctest::Approx(0.09 * dt).epsilon(0.12));
  CHECK(cov(0, 1) == doctest::Approx(0.03 * dt).epsilon(0.20));
}

TEST_CASE("double well settles into the two modes") {
  Dataset data = generate_double_well(200, 5.0, 0.1, 1e-3, 11);
  int pos = 0, neg = 0;
  double mean_abs = 0.0;
  for (const auto& traj : data.series) {
    const double x = traj(traj.rows() - 1, 0);
    (x > 0 ? pos : neg) += 1;
    mean_abs += std::fabs(x);
  }
  mean_abs /= 200.0;
  CHECK(pos > 20);
  CHECK(neg > 20);
  CHECK(mean_abs == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("csv round trip preserves every value") {
  Dataset data = generate_lotka_volterra(3, 1.0, 0.1, 1e-3, 5);
  const std::string path = "/tmp/nsde_test_dataset.csv";
  save_dataset_csv(data, path);
  Dataset back = load_dataset_csv(path);
  REQUIRE(back.series.size() == data.series.size());
  CHECK(back.dt == doctest::Approx(data.dt).epsilon(1e-12));
  for (std::size_t s = 0; s < data.series.size(); ++s) {
    CHECK(back.series[s] == data.series[s]);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv loader reports malformed input with line numbers") {
  const std::string path = "/tmp/nsde_test_bad.csv";
  auto write = [&](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };
  write("series,t,y1\n0,0.0,1.0\n0,0.1\n");
  CHECK_THROWS_WITH_AS(load_dataset_csv(path), doctest::Contains("line 3"),
                       std::runtime_error);
  write("series,t,y1\n0,0.0,1.0\n0,0.1,abc\n");
  CHECK_THROWS_WITH_AS(load_dataset_csv(path), doctest::Contains("line 3"),
                       std::runtime_error);
  write("wrong,t,y1\n");
  CHECK_THROWS_WITH_AS(load_dataset_csv(path), doctest::Contains("line 1"),
                       std::runtime_error);
  write("series,t,y1\n0,0.0,1.0\n0,0.1,1.0\n0,0.3,1.0\n");
  CHECK_THROWS_AS(load_dataset_csv(path), std::runtime_error);  // uneven spacing
  std::remove(path.c_str());
}

TEST_CASE("standardizer normalizes and inverts") {
  Dataset data = generate_lotka_volterra(4, 2.0, 0.05, 1e-3, 13);
  Standardizer st = fit_standardizer(data.series);
  // Pooled statistics of the transformed data are zero mean, unit variance.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(2);
  long total = 0;
  for (const auto& traj : data.series) {
    Eigen::MatrixXd z = st.apply(traj);
    mean += z.colwise().sum().transpose();
    sq += z.array().square().colwise().sum().matrix().transpose();
    total += z.rows();
    CHECK((st.invert(z) - traj).cwiseAbs().maxCoeff() < 1e-12);
  }
  mean /= static_cast<double>(total);
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sq / static_cast<double>(total - 1)).maxCoeff() == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<Eigen::MatrixXd> flat{Eigen::MatrixXd::Ones(10, 1)};
  CHECK_THROWS_AS(fit_standardizer(flat), std::invalid_argument);
}
