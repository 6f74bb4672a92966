#include "nsde/gaussian.hpp"

namespace nsde {

Eigen::MatrixXd sanitize_covariance(const Eigen::MatrixXd& m, MomentDiagnostics* diag) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() >= 0.0) return sym;
  if (diag != nullptr) diag->clamp_events += 1;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0.0) ev(i) = 1e-9;
  }
  Eigen::MatrixXd repaired =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (repaired + repaired.transpose().eval());
}

}  // namespace nsde
