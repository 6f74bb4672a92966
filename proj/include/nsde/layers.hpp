#pragma once

#include "nsde/backend.hpp"
#include "nsde/gaussian.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsde {

enum class LayerKind { Affine, Relu, Dropout, Tanh };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

/// One network layer. For Affine, weight is H_out x H_in and bias H_out x 1;
/// for Dropout, keep_prob is the Bernoulli keep probability q in (0, 1].
/// Tanh participates only in point evaluation (cubature baseline).
template <class M>
struct LayerT {
  LayerKind kind = LayerKind::Relu;
  M weight;
  M bias;
  double keep_prob = 1.0;
};

template <class M>
struct NetworkT {
  std::vector<LayerT<M>> layers;
  int input_dim = 0;
  int output_dim = 0;
};

using LayerSpec = LayerT<Eigen::MatrixXd>;
using NetworkSpec = NetworkT<Eigen::MatrixXd>;

/// Throws std::invalid_argument if adjacent layer dimensions are inconsistent
/// or dropout rates are out of range.
void validate_network(const NetworkSpec& net);

/// Point evaluation of one layer. Dropout applies x .* mask / q when a mask
/// is given and the expectation of that mapping (identity) otherwise.
Eigen::VectorXd layer_forward(const LayerSpec& layer, const Eigen::VectorXd& x,
                              const Eigen::VectorXd* dropout_mask = nullptr);

// ---------------------------------------------------------------------------
// Moment propagation kernels (Vertical Moment Matching). Generic over the
// backend so the same formulas serve numeric evaluation and the gradient tape.
// ---------------------------------------------------------------------------

namespace detail {
// 24-point Gauss-Legendre rule on [0, 1]; used for the exact off-diagonal
// ReLU residual R = rho^2 * int_0^1 (1-t) N2(eps_i, eps_j; rho t) dt.
inline constexpr int kGlOrder = 24;
inline constexpr double kGlNodes[kGlOrder] = {
    2.40639000148934468e-03, 1.26357220143452631e-02, 3.08627239986336011e-02,
    5.67922364977995198e-02, 8.99990070130485265e-02, 1.29937904210722821e-01,
    1.75953174031512227e-01, 2.27289264305580219e-01, 2.83103246186977464e-01,
    3.42478660151918302e-01, 4.04440566263191859e-01, 4.67971553568697185e-01,
    5.32028446431302759e-01, 5.95559433736808197e-01, 6.57521339848081698e-01,
    7.16896753813022536e-01, 7.72710735694419837e-01, 8.24046825968487773e-01,
    8.70062095789277179e-01, 9.10000992986951474e-01, 9.43207763502200480e-01,
    9.69137276001366343e-01, 9.87364277985654737e-01, 9.97593609998510655e-01};
inline constexpr double kGlWeights[kGlOrder] = {
    6.17061489999354545e-03, 1.42656943144668716e-02, 2.21387194087097755e-02,
    2.96492924577183709e-02, 3.66732407055402054e-02, 4.30950807659766441e-02,
    4.88093260520570324e-02, 5.37221350579828033e-02, 5.77528340268628065e-02,
    6.08352364639017096e-02, 6.29187281734141513e-02, 6.39690976733761074e-02,
    6.39690976733761074e-02, 6.29187281734141513e-02, 6.08352364639017096e-02,
    5.77528340268628065e-02, 5.37221350579828033e-02, 4.88093260520570324e-02,
    4.30950807659766441e-02, 3.66732407055402054e-02, 2.96492924577183709e-02,
    2.21387194087097755e-02, 1.42656943144668716e-02, 6.17061489999354545e-03};
inline constexpr double kTwoPi = 6.283185307179586476925287;
inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kRhoClip = 1.0 - 1e-12;
}  // namespace detail

template <class M, class Ctx>
GaussianT<M> affine_moments(const LayerT<M>& layer, const GaussianT<M>& in, const Ctx& ctx) {
  (void)ctx;
  M mean = add(matmul(layer.weight, in.mean), layer.bias);
  M cov = matmul(matmul(layer.weight, in.cov), transpose(layer.weight));
  cov = smul(add(cov, transpose(cov)), 0.5);
  return {std::move(mean), std::move(cov)};
}

template <class M, class Ctx>
GaussianT<M> relu_moments(const GaussianT<M>& in, const Ctx& ctx) {
  const int d = static_cast<int>(numeric(in.mean).rows());
  M dvar = clamp_min(diag_vec(in.cov), detail::kVarianceFloor);
  M s = csqrt(dvar);
  M eps = cdiv(in.mean, s);
  M phi_e = norm_pdf(eps);
  M cdf_e = norm_cdf(eps);
  M sr_e = add(phi_e, cmul(eps, cdf_e));
  M mean = cmul(s, sr_e);
  // Diagonal by the exact univariate formula: E[u^2] = (a^2+v) Phi + a s phi.
  M m2diag = add(cmul(add(csquare(in.mean), dvar), cdf_e), cmul(cmul(in.mean, s), phi_e));
  M vardiag = sub(m2diag, csquare(mean));
  if (d == 1) {
    return {std::move(mean), ctx.sanitize(diag_mat(vardiag))};
  }
  // Off-diagonal second moment in standardized units:
  //   E[u_i u_j]/(s_i s_j) = SR_i SR_j + rho Phi_i Phi_j + R(eps_i, eps_j, rho)
  // with the residual R evaluated by quadrature over the correlation path.
  M ones_col = ctx.lift(Eigen::MatrixXd::Ones(d, 1));
  M souter = matmul(s, transpose(s));
  M rho = clamp(cdiv(in.cov, souter), -detail::kRhoClip, detail::kRhoClip);
  M e_rows = matmul(eps, transpose(ones_col));  // (i,j) -> eps_i
  M e_cols = transpose(e_rows);                 // (i,j) -> eps_j
  M e_sq = add(csquare(e_rows), csquare(e_cols));
  M e_prod = cmul(e_rows, e_cols);
  M resid = ctx.lift(Eigen::MatrixXd::Zero(d, d));
  for (int n = 0; n < detail::kGlOrder; ++n) {
    const double t = detail::kGlNodes[n];
    const double w = detail::kGlWeights[n] * (1.0 - t);
    M st = smul(rho, t);
    M om = sadd(neg(csquare(st)), 1.0);  // 1 - (rho t)^2
    M expo = cdiv(sub(smul(cmul(st, e_prod), 2.0), e_sq), smul(om, 2.0));
    M dens = cdiv(cexp(expo), smul(csqrt(om), detail::kTwoPi));
    resid = add(resid, smul(dens, w));
  }
  resid = cmul(csquare(rho), resid);
  M m2n = add(add(matmul(sr_e, transpose(sr_e)), cmul(rho, matmul(cdf_e, transpose(cdf_e)))),
              resid);
  M cov_off = sub(cmul(souter, m2n), matmul(mean, transpose(mean)));
  Eigen::MatrixXd offmask = Eigen::MatrixXd::Ones(d, d) - Eigen::MatrixXd::Identity(d, d);
  M cov = add(cmul(cov_off, ctx.lift(offmask)), diag_mat(vardiag));
  return {std::move(mean), ctx.sanitize(cov)};
}

template <class M, class Ctx>
GaussianT<M> dropout_moments(double keep_prob, const GaussianT<M>& in, const Ctx& ctx) {
  (void)ctx;
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument("dropout_moments: keep probability must be in (0,1]");
  }
  if (keep_prob == 1.0) return in;
  const double f = (1.0 - keep_prob) / keep_prob;
  M extra = smul(add(diag_vec(in.cov), csquare(in.mean)), f);
  M cov = add(in.cov, diag_mat(extra));
  return {in.mean, std::move(cov)};
}

/// E[d(layer out)/d(layer in)] under the input Gaussian, rows = outputs.
template <class M, class Ctx>
M layer_expected_jacobian(const LayerT<M>& layer, const GaussianT<M>& in, const Ctx& ctx) {
  const int d = static_cast<int>(numeric(in.mean).rows());
  switch (layer.kind) {
    case LayerKind::Affine:
      return layer.weight;
    case LayerKind::Relu: {
      M dvar = clamp_min(diag_vec(in.cov), detail::kVarianceFloor);
      M eps = cdiv(in.mean, csqrt(dvar));
      return diag_mat(norm_cdf(eps));
    }
    case LayerKind::Dropout:
      return ctx.lift(Eigen::MatrixXd::Identity(d, d));
    case LayerKind::Tanh:
      throw std::invalid_argument("expected jacobian: tanh has no moment-propagation rule");
  }
  throw std::logic_error("unreachable");
}

template <class M, class Ctx>
GaussianT<M> layer_moments(const LayerT<M>& layer, const GaussianT<M>& in, const Ctx& ctx) {
  switch (layer.kind) {
    case LayerKind::Affine:
      return affine_moments(layer, in, ctx);
    case LayerKind::Relu:
      return relu_moments(in, ctx);
    case LayerKind::Dropout:
      return dropout_moments(layer.keep_prob, in, ctx);
    case LayerKind::Tanh:
      throw std::invalid_argument("layer_moments: tanh has no moment-propagation rule");
  }
  throw std::logic_error("unreachable");
}

// Convenience plain-backend wrappers over GaussianState.
GaussianState affine_moments(const LayerSpec& layer, const GaussianState& in,
                             MomentDiagnostics* diag = nullptr);
GaussianState relu_moments(const GaussianState& in, MomentDiagnostics* diag = nullptr);
GaussianState dropout_moments(double keep_prob, const GaussianState& in,
                              MomentDiagnostics* diag = nullptr);
Eigen::MatrixXd layer_expected_jacobian(const LayerSpec& layer, const GaussianState& in);

}  // namespace nsde
