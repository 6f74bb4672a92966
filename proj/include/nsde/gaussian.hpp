#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace nsde {

/// Per-run accumulator for numerical repair events. Passed explicitly; there
/// is no hidden shared state.
struct MomentDiagnostics {
  std::uint64_t clamp_events = 0;
};

/// Symmetrizes M and clamps eigenvalues below zero to 1e-9. Counts a clamp
/// event in `diag` (if given) whenever any eigenvalue needed repair.
Eigen::MatrixXd sanitize_covariance(const Eigen::MatrixXd& m, MomentDiagnostics* diag = nullptr);

/// Mean and covariance of a Gaussian marginal. Covariance is symmetrized on
/// construction; PSD holds up to a -1e-8 eigenvalue tolerance.
struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianState() = default;
  GaussianState(Eigen::VectorXd mu, Eigen::MatrixXd sigma)
      : mean(std::move(mu)), cov(std::move(sigma)) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
      throw std::invalid_argument("GaussianState: dimension mismatch");
    }
    cov = 0.5 * (cov + cov.transpose().eval());
  }

  Eigen::Index dim() const { return mean.size(); }
};

/// Gaussian moments in an arbitrary backend (Eigen matrices or tape values).
/// mean is a D x 1 matrix, cov is D x D.
template <class M>
struct GaussianT {
  M mean;
  M cov;
};

}  // namespace nsde
