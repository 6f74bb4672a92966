#pragma once

#include "nsde/network.hpp"
#include "nsde/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace nsde {

/// Latent SDE dz = f(z, u) dt + L(z, u) dw with diagonal diffusion. A model
/// without a diffusion network is deterministic (an ODE).
template <class M>
struct ModelT {
  NetworkT<M> drift;
  std::optional<NetworkT<M>> diffusion;
  int latent_dim = 0;
  int control_dim = 0;
};

using NsdeModel = ModelT<Eigen::MatrixXd>;

/// Throws std::invalid_argument on dimension inconsistencies between the
/// networks and the declared latent/control sizes.
void validate_model(const NsdeModel& model);

/// Network evaluation counts, accumulated per rollout/step.
struct EvalCounters {
  std::uint64_t drift_evals = 0;
  std::uint64_t diffusion_evals = 0;
};

// ---------------------------------------------------------------------------
// Monte Carlo baseline (plain backend only).
// ---------------------------------------------------------------------------

/// One Euler-Maruyama step for a single particle. `dw` must be distributed
/// N(0, dt I); it is ignored for models without diffusion.
Eigen::VectorXd em_step(const NsdeModel& model, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& u, double dt, const Eigen::VectorXd& dw,
                        EvalCounters* counters = nullptr);

struct ParticleRollout {
  /// steps+1 snapshots, each particles x latent_dim (row = one particle).
  std::vector<Eigen::MatrixXd> states;
  /// Particles that went non-finite (frozen at their last finite state).
  std::uint64_t diverged = 0;
};

/// Simulates `steps` Euler-Maruyama steps for every row of `init`. Each
/// particle consumes its own counter-based substream of `seed`, so results
/// are bitwise independent of particle count and evaluation order.
/// `controls` is steps x control_dim, or empty for autonomous models.
ParticleRollout mc_rollout(const NsdeModel& model, const Eigen::MatrixXd& init,
                           const Eigen::MatrixXd& controls, double dt, int steps,
                           std::uint64_t seed, EvalCounters* counters = nullptr);

/// Draws n samples (rows) from the Gaussian via its Cholesky factor.
Eigen::MatrixXd sample_gaussian(const GaussianState& g, int n, Rng& rng);

/// Sample mean and unbiased covariance of an ensemble (rows = samples).
GaussianState ensemble_moments(const Eigen::MatrixXd& samples);

// ---------------------------------------------------------------------------
// Bidimensional moment matching step (generic backend).
// ---------------------------------------------------------------------------

template <class M, class Ctx>
GaussianT<M> bmm_step(const ModelT<M>& model, const GaussianT<M>& state,
                      const Eigen::VectorXd& u, double dt, const Ctx& ctx,
                      EvalCounters* counters = nullptr) {
  DriftMoments<M> dm = drift_moments(model.drift, state, u, ctx);
  if (counters != nullptr) counters->drift_evals += 1;
  M mean = add(state.mean, smul(dm.out.mean, dt));
  M cross = stein_cross_cov(state.cov, dm.jacobian);
  M cov = add(state.cov, smul(dm.out.cov, dt * dt));
  cov = add(cov, smul(add(cross, transpose(cross)), dt));
  if (model.diffusion.has_value()) {
    M second = diffusion_second_moment(*model.diffusion, state, u, ctx);
    if (counters != nullptr) counters->diffusion_evals += 1;
    cov = add(cov, smul(diag_mat(second), dt));
  }
  return {std::move(mean), ctx.sanitize(cov)};
}

// ---------------------------------------------------------------------------
// Unscented/cubature baseline step (generic backend).
// ---------------------------------------------------------------------------

/// Point evaluation of a network in an arbitrary backend. Dropout layers act
/// as their expectation (identity).
template <class M, class Ctx>
M network_point_forward(const NetworkT<M>& net, M x, const Ctx& ctx) {
  (void)ctx;
  for (const LayerT<M>& layer : net.layers) {
    switch (layer.kind) {
      case LayerKind::Affine:
        x = add(matmul(layer.weight, x), layer.bias);
        break;
      case LayerKind::Relu:
        x = relu(x);
        break;
      case LayerKind::Tanh:
        x = ctanh(x);
        break;
      case LayerKind::Dropout:
        break;
    }
  }
  return x;
}

template <class M, class Ctx>
GaussianT<M> cubature_step(const ModelT<M>& model, const GaussianT<M>& state,
                           const Eigen::VectorXd& u, double dt, double lambda,
                           const Ctx& ctx, EvalCounters* counters = nullptr) {
  const int d = static_cast<int>(numeric(state.mean).rows());
  if (!(lambda > -static_cast<double>(d))) {
    throw std::invalid_argument("cubature_step: lambda must exceed -D");
  }
  // Square root of the covariance, with escalating jitter if the exact
  // factorization fails on a marginally indefinite input.
  M root;
  {
    bool ok = false;
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
      try {
        M cov = state.cov;
        if (jitter > 0.0) {
          cov = add(cov, ctx.lift(jitter * Eigen::MatrixXd::Identity(d, d)));
        }
        root = cholesky(cov);
        ok = true;
      } catch (const std::runtime_error&) {
        jitter = (jitter == 0.0) ? 1e-8 : jitter * 10.0;
      }
    }
    if (!ok) throw std::runtime_error("cubature_step: covariance factorization failed");
  }
  const double scale = std::sqrt(lambda + d);
  const double w0 = lambda / (d + lambda);
  const double wi = 1.0 / (2.0 * (d + lambda));

  std::vector<M> points;
  points.reserve(2 * d + 1);
  points.push_back(state.mean);
  for (int i = 0; i < d; ++i) {
    M col = smul(block(root, 0, i, d, 1), scale);
    points.push_back(add(state.mean, col));
    points.push_back(sub(state.mean, col));
  }
  std::vector<double> weights;
  weights.reserve(points.size());
  weights.push_back(w0);
  for (int i = 0; i < 2 * d; ++i) weights.push_back(wi);

  // Drift transport of each sigma point.
  std::vector<M> moved;
  moved.reserve(points.size());
  for (const M& p : points) {
    M in = p;
    if (model.control_dim > 0) in = concat_rows(in, ctx.lift(Eigen::MatrixXd(u)));
    M f = network_point_forward(model.drift, std::move(in), ctx);
    if (counters != nullptr) counters->drift_evals += 1;
    moved.push_back(add(p, smul(f, dt)));
  }
  M mean = smul(moved[0], weights[0]);
  for (std::size_t i = 1; i < moved.size(); ++i) {
    mean = add(mean, smul(moved[i], weights[i]));
  }
  M cov = ctx.lift(Eigen::MatrixXd::Zero(d, d));
  for (std::size_t i = 0; i < moved.size(); ++i) {
    M delta = sub(moved[i], mean);
    cov = add(cov, smul(matmul(delta, transpose(delta)), weights[i]));
  }
  if (model.diffusion.has_value()) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      M in = points[i];
      if (model.control_dim > 0) in = concat_rows(in, ctx.lift(Eigen::MatrixXd(u)));
      M c = network_point_forward(*model.diffusion, std::move(in), ctx);
      if (counters != nullptr) counters->diffusion_evals += 1;
      cov = add(cov, smul(diag_mat(csquare(c)), weights[i] * dt));
    }
  }
  return {std::move(mean), ctx.sanitize(cov)};
}

// ---------------------------------------------------------------------------
// Plain-backend rollouts.
// ---------------------------------------------------------------------------

GaussianState bmm_step(const NsdeModel& model, const GaussianState& state,
                       const Eigen::VectorXd& u, double dt,
                       MomentDiagnostics* diag = nullptr, EvalCounters* counters = nullptr);

GaussianState cubature_step(const NsdeModel& model, const GaussianState& state,
                            const Eigen::VectorXd& u, double dt, double lambda,
                            MomentDiagnostics* diag = nullptr,
                            EvalCounters* counters = nullptr);

/// steps+1 marginals including the initial state. `controls` is
/// steps x control_dim or empty.
std::vector<GaussianState> bmm_rollout(const NsdeModel& model, const GaussianState& init,
                                       const Eigen::MatrixXd& controls, double dt, int steps,
                                       MomentDiagnostics* diag = nullptr,
                                       EvalCounters* counters = nullptr);

std::vector<GaussianState> cubature_rollout(const NsdeModel& model, const GaussianState& init,
                                            const Eigen::MatrixXd& controls, double dt,
                                            int steps, double lambda,
                                            MomentDiagnostics* diag = nullptr,
                                            EvalCounters* counters = nullptr);

}  // namespace nsde
