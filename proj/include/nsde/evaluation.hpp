#pragma once

#include "nsde/gaussian.hpp"

#include <array>
#include <vector>

namespace nsde {

/// Mean squared error of predictive means against the true states.
/// `truth` rows are aligned with the prediction entries.
double mse(const std::vector<GaussianState>& pred, const Eigen::MatrixXd& truth);

/// Mean Gaussian negative log likelihood of the truth under the predictive
/// marginals (average per time point).
double nll(const std::vector<GaussianState>& pred, const Eigen::MatrixXd& truth);

/// Fraction of (prediction, truth) pairs whose squared Mahalanobis distance
/// lies inside the chi-square credible region at probability `level`.
/// Levels 0 and 1 return 0 and 1 by convention.
double empirical_coverage(const std::vector<GaussianState>& pred,
                          const std::vector<Eigen::VectorXd>& truth, double level);

inline constexpr int kCalibrationLevels = 11;

struct CalibrationReport {
  /// Nominal levels 0, 0.1, ..., 1 and the matching empirical coverages.
  std::array<double, kCalibrationLevels> nominal{};
  std::array<double, kCalibrationLevels> empirical{};
  /// Mean |empirical - nominal| over the interior levels 0.1 .. 0.9 (the
  /// endpoints are pinned by convention and carry no information).
  double ecpe = 0.0;
};

CalibrationReport calibration_report(const std::vector<GaussianState>& pred,
                                     const std::vector<Eigen::VectorXd>& truth);

/// Expected calibration probability error; shorthand for the report's scalar.
double ecpe(const std::vector<GaussianState>& pred, const std::vector<Eigen::VectorXd>& truth);

}  // namespace nsde
