#include "nsde/evaluation.hpp"

#include "nsde/special_math.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nsde {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594;

void check_aligned(std::size_t pred, std::size_t truth, const char* what) {
  if (pred != truth) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (pred == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}
}  // namespace

double mse(const std::vector<GaussianState>& pred, const Eigen::MatrixXd& truth) {
  check_aligned(pred.size(), static_cast<std::size_t>(truth.rows()), "mse");
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    acc += (pred[k].mean - truth.row(k).transpose()).squaredNorm();
  }
  return acc / (static_cast<double>(pred.size()) * static_cast<double>(truth.cols()));
}

double nll(const std::vector<GaussianState>& pred, const Eigen::MatrixXd& truth) {
  check_aligned(pred.size(), static_cast<std::size_t>(truth.rows()), "nll");
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Eigen::VectorXd r = truth.row(k).transpose() - pred[k].mean;
    Eigen::LLT<Eigen::MatrixXd> llt(pred[k].cov);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("nll: predictive covariance not positive definite at step " +
                               std::to_string(k));
    }
    const Eigen::MatrixXd l = llt.matrixL();
    const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().solve(r);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
    acc += 0.5 * (w.squaredNorm() + logdet + static_cast<double>(r.size()) * kLog2Pi);
  }
  return acc / static_cast<double>(pred.size());
}

double empirical_coverage(const std::vector<GaussianState>& pred,
                          const std::vector<Eigen::VectorXd>& truth, double level) {
  check_aligned(pred.size(), truth.size(), "empirical_coverage");
  if (level <= 0.0) return 0.0;
  if (level >= 1.0) return 1.0;
  const int df = static_cast<int>(pred.front().dim());
  const double threshold = chi2_inverse_cdf(level, df);
  std::size_t covered = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Eigen::VectorXd r = truth[k] - pred[k].mean;
    Eigen::LLT<Eigen::MatrixXd> llt(pred[k].cov);
    double quad;
    if (llt.info() == Eigen::Success) {
      quad = llt.matrixL().solve(r).squaredNorm();
    } else {
      // Degenerate covariance: infinite distance unless the residual is zero.
      quad = (r.squaredNorm() == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    if (quad <= threshold) covered += 1;
  }
  return static_cast<double>(covered) / static_cast<double>(pred.size());
}

CalibrationReport calibration_report(const std::vector<GaussianState>& pred,
                                     const std::vector<Eigen::VectorXd>& truth) {
  CalibrationReport report;
  double err = 0.0;
  for (int i = 0; i < kCalibrationLevels; ++i) {
    const double level = static_cast<double>(i) / (kCalibrationLevels - 1);
    report.nominal[i] = level;
    report.empirical[i] = empirical_coverage(pred, truth, level);
    if (i > 0 && i < kCalibrationLevels - 1) {
      err += std::fabs(report.empirical[i] - report.nominal[i]);
    }
  }
  report.ecpe = err / static_cast<double>(kCalibrationLevels - 2);
  return report;
}

double ecpe(const std::vector<GaussianState>& pred, const std::vector<Eigen::VectorXd>& truth) {
  return calibration_report(pred, truth).ecpe;
}

}  // namespace nsde
