#pragma once

#include "nsde/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace nsde {

/// A set of equally spaced trajectories: series[i] is (steps+1) x dim with
/// row k observed at time k * dt.
struct Dataset {
  std::vector<Eigen::MatrixXd> series;
  double dt = 0.0;
  /// Trajectories that left the integration box and were resampled.
  std::uint64_t rejected = 0;
};

/// Stochastic Lotka-Volterra: dx1 = (2 x1 - x1 x2) dt, dx2 = (x1 x2 - 4 x2) dt
/// plus correlated noise with increment covariance [[.05,.03],[.03,.09]] dt.
/// Initial states are uniform on [1,4]^2. Simulated on a fine grid of spacing
/// dt_fine and subsampled to dt_obs over [0, t_end]. Trajectories leaving
/// [0, 1e3]^2 are rejected and redrawn (counted in `rejected`).
Dataset generate_lotka_volterra(int n_series, double t_end, double dt_obs, double dt_fine,
                                std::uint64_t seed);

/// Double well: dx = 4 x (1 - x^2) dt + dw, x0 ~ N(0, 1/4), same sampling
/// scheme; the two stable modes sit at +-1.
Dataset generate_double_well(int n_series, double t_end, double dt_obs, double dt_fine,
                             std::uint64_t seed);

/// CSV with header "series,t,y1,...,yD". Strict: every row must have the same
/// column count, numeric fields, constant time spacing, and contiguous series
/// ids starting at 0. Errors mention the offending line number.
void save_dataset_csv(const Dataset& data, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

/// Per-dimension affine rescaling to zero mean / unit variance, fitted on a
/// reference split. Throws on (near) zero variance.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& rows) const;
};

Standardizer fit_standardizer(const std::vector<Eigen::MatrixXd>& series);

}  // namespace nsde
