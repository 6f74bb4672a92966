#pragma once

#include "nsde/layers.hpp"

#include <cstdint>

namespace nsde {

/// Appends the (deterministic) control vector to the latent Gaussian:
/// mean [mu; u], covariance [[Sigma, 0], [0, 0]].
template <class M, class Ctx>
GaussianT<M> augment_with_control(const GaussianT<M>& state, const Eigen::VectorXd& control,
                                  const Ctx& ctx) {
  const int d = static_cast<int>(numeric(state.mean).rows());
  const int du = static_cast<int>(control.size());
  if (du == 0) return state;
  M mean = concat_rows(state.mean, ctx.lift(Eigen::MatrixXd(control)));
  Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(d + du, d);
  embed.topRows(d).setIdentity();
  M p = ctx.lift(embed);
  M cov = matmul(matmul(p, state.cov), transpose(p));
  return {std::move(mean), std::move(cov)};
}

template <class M>
struct VmmResult {
  GaussianT<M> out;
  std::vector<M> layer_jacobians;  // expected Jacobians, input-side first
};

/// Propagates a Gaussian through the network layer by layer. Collects each
/// layer's expected Jacobian when requested (needed for the drift cross term).
template <class M, class Ctx>
VmmResult<M> vmm_forward(const NetworkT<M>& net, GaussianT<M> state, const Ctx& ctx,
                         bool collect_jacobians) {
  VmmResult<M> result;
  if (collect_jacobians) result.layer_jacobians.reserve(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (collect_jacobians) {
      result.layer_jacobians.push_back(layer_expected_jacobian(net.layers[i], state, ctx));
    }
    state = layer_moments(net.layers[i], state, ctx);
    if (!numeric(state.mean).allFinite() || !numeric(state.cov).allFinite()) {
      throw std::runtime_error("vmm_forward: non-finite moments after layer " +
                               std::to_string(i) + " (" + to_string(net.layers[i].kind) + ")");
    }
  }
  result.out = std::move(state);
  return result;
}

/// Product J_L * ... * J_1 of the per-layer expected Jacobians, truncated to
/// the first `state_dim` input columns (control columns carry no covariance).
template <class M>
M expected_jacobian_chain(const std::vector<M>& layer_jacobians, int state_dim) {
  if (layer_jacobians.empty()) {
    throw std::invalid_argument("expected_jacobian_chain: empty layer list");
  }
  M chain = layer_jacobians.front();
  for (std::size_t i = 1; i < layer_jacobians.size(); ++i) {
    chain = matmul(layer_jacobians[i], chain);
  }
  const int cols = static_cast<int>(numeric(chain).cols());
  if (cols == state_dim) return chain;
  return block(chain, 0, 0, static_cast<int>(numeric(chain).rows()), state_dim);
}

template <class M>
struct DriftMoments {
  GaussianT<M> out;  // a = E[f], B = Cov[f]
  M jacobian;        // E[df/dz] restricted to the latent columns
};

/// Drift network pass: moments of f(z, u) plus the expected state Jacobian.
template <class M, class Ctx>
DriftMoments<M> drift_moments(const NetworkT<M>& net, const GaussianT<M>& state,
                              const Eigen::VectorXd& control, const Ctx& ctx) {
  const int d = static_cast<int>(numeric(state.mean).rows());
  GaussianT<M> in = augment_with_control(state, control, ctx);
  VmmResult<M> vmm = vmm_forward(net, std::move(in), ctx, /*collect_jacobians=*/true);
  M jac = expected_jacobian_chain(vmm.layer_jacobians, d);
  return {std::move(vmm.out), std::move(jac)};
}

/// Diagonal of E[L L^T] for the diffusion network: diag(Var[c]) + E[c]^2,
/// floored at zero. Returned as a D x 1 column.
template <class M, class Ctx>
M diffusion_second_moment(const NetworkT<M>& net, const GaussianT<M>& state,
                          const Eigen::VectorXd& control, const Ctx& ctx) {
  GaussianT<M> in = augment_with_control(state, control, ctx);
  VmmResult<M> vmm = vmm_forward(net, std::move(in), ctx, /*collect_jacobians=*/false);
  M second = add(diag_vec(vmm.out.cov), csquare(vmm.out.mean));
  return clamp_min(second, 0.0);
}

/// Stein cross-covariance Cov[z, f(z)] = Sigma * E[J]^T (transposed pair
/// C = Cov[z, f] with rows indexed by z).
template <class M>
M stein_cross_cov(const M& cov, const M& jacobian) {
  return matmul(cov, transpose(jacobian));
}

// Plain-backend conveniences.
GaussianState vmm_forward(const NetworkSpec& net, const GaussianState& in,
                          MomentDiagnostics* diag = nullptr);
Eigen::VectorXd network_forward(const NetworkSpec& net, const Eigen::VectorXd& x);

}  // namespace nsde
