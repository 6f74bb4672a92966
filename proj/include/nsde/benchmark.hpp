#pragma once

#include "nsde/evaluation.hpp"
#include "nsde/inference.hpp"

#include <string>
#include <vector>

namespace nsde {

struct CalibrationRow {
  std::string method;  // "bmm" or "mc"
  int particles = 0;   // 0 for deterministic methods
  double ecpe = 0.0;
  double mse = 0.0;
  double nll = 0.0;
  std::uint64_t drift_evals = 0;
};

/// Rolls the trained model forward over every test window (non-overlapping,
/// length `horizon`, conditioned on the window's first observation) and
/// scores the pooled predictive marginals. The Monte Carlo rows fit a
/// Gaussian to the particle ensemble before scoring so all methods are
/// compared on the same footing.
std::vector<CalibrationRow> benchmark_calibration(const TrainableModel& tm,
                                                  const std::vector<Eigen::MatrixXd>& test,
                                                  double dt, int horizon,
                                                  const std::vector<int>& particle_counts,
                                                  std::uint64_t seed);

struct AblationRow {
  int dim = 0;
  int width = 0;
  std::string method;      // "vmm" or "cubature"
  double mean_err = 0.0;   // relative L2 error of the output mean vs MC
  double cov_err = 0.0;    // relative Frobenius error of the output covariance
  double seconds = 0.0;    // median of 5 timed runs after warmup
};

/// One-pass moment propagation accuracy/cost study on random networks with
/// Gaussian inputs (Wishart-style covariances). VMM runs on
/// affine-relu-dropout-affine networks; the cubature baseline runs on
/// affine-tanh-affine networks. Ground truth is seeded Monte Carlo with
/// `mc_samples` draws (masks included for dropout).
std::vector<AblationRow> ablate_vmm_vs_cubature(const std::vector<int>& dims,
                                                const std::vector<int>& widths, int reps,
                                                int mc_samples, std::uint64_t seed);

}  // namespace nsde
