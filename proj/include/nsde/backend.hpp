#pragma once

// Shared vocabulary for the moment-propagation kernels. The kernels are
// templates over the matrix type M: either Eigen::MatrixXd (plain numeric
// evaluation) or ad::Value (taped evaluation for gradients). This header
// provides the plain overloads plus the per-backend context objects.

#include "nsde/autodiff.hpp"
#include "nsde/gaussian.hpp"
#include "nsde/special_math.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace nsde {

using Eigen::MatrixXd;

inline MatrixXd add(const MatrixXd& a, const MatrixXd& b) { return a + b; }
inline MatrixXd sub(const MatrixXd& a, const MatrixXd& b) { return a - b; }
inline MatrixXd neg(const MatrixXd& a) { return -a; }
inline MatrixXd cmul(const MatrixXd& a, const MatrixXd& b) { return a.cwiseProduct(b); }
inline MatrixXd cdiv(const MatrixXd& a, const MatrixXd& b) { return a.cwiseQuotient(b); }
inline MatrixXd matmul(const MatrixXd& a, const MatrixXd& b) { return a * b; }
inline MatrixXd transpose(const MatrixXd& a) { return a.transpose(); }
inline MatrixXd smul(const MatrixXd& a, double s) { return a * s; }
inline MatrixXd sadd(const MatrixXd& a, double s) { return (a.array() + s).matrix(); }
inline MatrixXd bscale(const MatrixXd& a, const MatrixXd& s) { return a * s(0, 0); }

inline MatrixXd cexp(const MatrixXd& a) { return a.array().exp().matrix(); }
inline MatrixXd clog(const MatrixXd& a) { return a.array().log().matrix(); }
inline MatrixXd csqrt(const MatrixXd& a) { return a.array().sqrt().matrix(); }
inline MatrixXd casin(const MatrixXd& a) { return a.array().asin().matrix(); }
inline MatrixXd ctanh(const MatrixXd& a) { return a.array().tanh().matrix(); }
inline MatrixXd csquare(const MatrixXd& a) { return a.array().square().matrix(); }
inline MatrixXd softplus(const MatrixXd& a) {
  return a.unaryExpr([](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
}
inline MatrixXd norm_pdf(const MatrixXd& a) {
  return a.unaryExpr([](double x) { return std_normal_pdf(x); });
}
inline MatrixXd norm_cdf(const MatrixXd& a) {
  return a.unaryExpr([](double x) { return std_normal_cdf(x); });
}
inline MatrixXd clamp_min(const MatrixXd& a, double m) { return a.cwiseMax(m); }
inline MatrixXd clamp(const MatrixXd& a, double lo, double hi) {
  return a.cwiseMax(lo).cwiseMin(hi);
}
inline MatrixXd relu(const MatrixXd& a) { return a.cwiseMax(0.0); }

inline MatrixXd sum(const MatrixXd& a) {
  MatrixXd r(1, 1);
  r(0, 0) = a.sum();
  return r;
}
inline MatrixXd trace(const MatrixXd& a) {
  MatrixXd r(1, 1);
  r(0, 0) = a.trace();
  return r;
}
inline MatrixXd diag_vec(const MatrixXd& a) { return a.diagonal(); }
inline MatrixXd diag_mat(const MatrixXd& v) { return MatrixXd(v.col(0).asDiagonal()); }
inline MatrixXd block(const MatrixXd& a, int i0, int j0, int r, int c) {
  return a.block(i0, j0, r, c);
}
inline MatrixXd concat_rows(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a;
  v.bottomRows(b.rows()) = b;
  return v;
}
inline MatrixXd squared_norm(const MatrixXd& a) {
  MatrixXd r(1, 1);
  r(0, 0) = a.squaredNorm();
  return r;
}
inline MatrixXd cholesky(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(MatrixXd(0.5 * (a + a.transpose())));
  if (llt.info() != Eigen::Success) throw std::runtime_error("cholesky: factorization failed");
  return llt.matrixL();
}

/// Numeric view of a backend value, for finite / PSD checks.
inline const MatrixXd& numeric(const MatrixXd& m) { return m; }
inline const MatrixXd& numeric(const ad::Value& v) { return v.val(); }

/// Context for plain numeric propagation. Covariance repair clamps
/// eigenvalues (counted in diag).
struct PlainCtx {
  MomentDiagnostics* diag = nullptr;

  using Mat = MatrixXd;
  MatrixXd lift(const MatrixXd& m) const { return m; }
  MatrixXd sanitize(const MatrixXd& m) const { return sanitize_covariance(m, diag); }
};

/// Context for taped propagation. Covariance repair symmetrizes (the
/// differentiable part) and, when the discrete update drives the smallest
/// eigenvalue below a floor, adds a constant diagonal shift that restores
/// positive definiteness. The shift is held constant on the tape, so
/// gradients flow through the symmetrized covariance unchanged.
struct AdCtx {
  ad::Tape* tape = nullptr;
  MomentDiagnostics* diag = nullptr;

  using Mat = ad::Value;
  ad::Value lift(const MatrixXd& m) const { return tape->constant(m); }
  ad::Value sanitize(const ad::Value& m) const {
    ad::Value sym = ad::smul(ad::add(m, ad::transpose(m)), 0.5);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym.val());
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < 1e-9) {
      if (diag != nullptr) diag->clamp_events += 1;
      const Eigen::Index d = sym.val().rows();
      sym = ad::add(sym,
                    tape->constant((1e-9 - min_eig) * MatrixXd::Identity(d, d)));
    }
    return sym;
  }
};

}  // namespace nsde
