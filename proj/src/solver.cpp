#include "nsde/solver.hpp"

namespace nsde {

void validate_model(const NsdeModel& model) {
  if (model.latent_dim <= 0) throw std::invalid_argument("model: latent_dim must be positive");
  if (model.control_dim < 0) throw std::invalid_argument("model: control_dim must be >= 0");
  validate_network(model.drift);
  const int in_dim = model.latent_dim + model.control_dim;
  if (model.drift.input_dim != in_dim || model.drift.output_dim != model.latent_dim) {
    throw std::invalid_argument("model: drift network must map latent+control to latent");
  }
  if (model.diffusion.has_value()) {
    validate_network(*model.diffusion);
    if (model.diffusion->input_dim != in_dim ||
        model.diffusion->output_dim != model.latent_dim) {
      throw std::invalid_argument("model: diffusion network must map latent+control to latent");
    }
  }
}

namespace {

Eigen::VectorXd augment_point(const Eigen::VectorXd& z, const Eigen::VectorXd& u) {
  if (u.size() == 0) return z;
  Eigen::VectorXd x(z.size() + u.size());
  x << z, u;
  return x;
}

Eigen::VectorXd control_row(const Eigen::MatrixXd& controls, int k) {
  if (controls.size() == 0) return Eigen::VectorXd();
  return controls.row(k).transpose();
}

/// Point evaluation with a fresh Bernoulli mask drawn for every dropout
/// layer: the mask noise is part of the model, so Monte Carlo baselines must
/// sample it per particle and per step (moment propagation marginalizes it).
Eigen::VectorXd masked_forward(const NetworkSpec& net, Eigen::VectorXd x, Rng& rng) {
  for (const LayerSpec& layer : net.layers) {
    if (layer.kind == LayerKind::Dropout) {
      Eigen::VectorXd mask(x.size());
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask(i) = (rng.uniform() < layer.keep_prob) ? 1.0 : 0.0;
      }
      x = layer_forward(layer, x, &mask);
    } else {
      x = layer_forward(layer, x);
    }
  }
  return x;
}

}  // namespace

Eigen::VectorXd em_step(const NsdeModel& model, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& u, double dt, const Eigen::VectorXd& dw,
                        EvalCounters* counters) {
  const Eigen::VectorXd x = augment_point(z, u);
  Eigen::VectorXd next = z + network_forward(model.drift, x) * dt;
  if (counters != nullptr) counters->drift_evals += 1;
  if (model.diffusion.has_value()) {
    if (dw.size() != z.size()) throw std::invalid_argument("em_step: noise size mismatch");
    next += network_forward(*model.diffusion, x).cwiseProduct(dw);
    if (counters != nullptr) counters->diffusion_evals += 1;
  }
  return next;
}

ParticleRollout mc_rollout(const NsdeModel& model, const Eigen::MatrixXd& init,
                           const Eigen::MatrixXd& controls, double dt, int steps,
                           std::uint64_t seed, EvalCounters* counters) {
  const int particles = static_cast<int>(init.rows());
  const int d = static_cast<int>(init.cols());
  if (d != model.latent_dim) throw std::invalid_argument("mc_rollout: state size mismatch");
  if (controls.size() != 0 && controls.rows() < steps) {
    throw std::invalid_argument("mc_rollout: not enough control rows");
  }
  const double noise_scale = std::sqrt(dt);

  ParticleRollout out;
  out.states.reserve(steps + 1);
  out.states.push_back(init);
  Eigen::MatrixXd current = init;
  std::vector<Rng> streams;
  streams.reserve(particles);
  for (int p = 0; p < particles; ++p) {
    streams.push_back(Rng::substream(seed, static_cast<std::uint64_t>(p)));
  }
  std::vector<bool> frozen(particles, false);
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd u = control_row(controls, k);
    Eigen::MatrixXd next = current;
    for (int p = 0; p < particles; ++p) {
      Eigen::VectorXd dw(d);
      if (model.diffusion.has_value()) {
        for (int i = 0; i < d; ++i) dw(i) = streams[p].normal() * noise_scale;
      }
      if (frozen[p]) continue;
      const Eigen::VectorXd x = augment_point(current.row(p).transpose(), u);
      Eigen::VectorXd z =
          current.row(p).transpose() + masked_forward(model.drift, x, streams[p]) * dt;
      if (counters != nullptr) counters->drift_evals += 1;
      if (model.diffusion.has_value()) {
        z += masked_forward(*model.diffusion, x, streams[p]).cwiseProduct(dw);
        if (counters != nullptr) counters->diffusion_evals += 1;
      }
      if (!z.allFinite()) {
        frozen[p] = true;
        out.diverged += 1;
        continue;
      }
      next.row(p) = z.transpose();
    }
    current = std::move(next);
    out.states.push_back(current);
  }
  return out;
}

Eigen::MatrixXd sample_gaussian(const GaussianState& g, int n, Rng& rng) {
  const int d = static_cast<int>(g.dim());
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov + 1e-12 * Eigen::MatrixXd::Identity(d, d));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("sample_gaussian: covariance not positive definite");
  }
  Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd out(n, d);
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd eps(d);
    for (int i = 0; i < d; ++i) eps(i) = rng.normal();
    out.row(s) = (g.mean + l * eps).transpose();
  }
  return out;
}

GaussianState ensemble_moments(const Eigen::MatrixXd& samples) {
  const int n = static_cast<int>(samples.rows());
  if (n < 2) throw std::invalid_argument("ensemble_moments: need at least two samples");
  Eigen::VectorXd mean = samples.colwise().mean();
  Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  return GaussianState(std::move(mean), std::move(cov));
}

GaussianState bmm_step(const NsdeModel& model, const GaussianState& state,
                       const Eigen::VectorXd& u, double dt, MomentDiagnostics* diag,
                       EvalCounters* counters) {
  PlainCtx ctx{diag};
  GaussianT<Eigen::MatrixXd> s{state.mean, state.cov};
  GaussianT<Eigen::MatrixXd> r = bmm_step(model, s, u, dt, ctx, counters);
  return GaussianState(Eigen::VectorXd(r.mean.col(0)), std::move(r.cov));
}

GaussianState cubature_step(const NsdeModel& model, const GaussianState& state,
                            const Eigen::VectorXd& u, double dt, double lambda,
                            MomentDiagnostics* diag, EvalCounters* counters) {
  PlainCtx ctx{diag};
  GaussianT<Eigen::MatrixXd> s{state.mean, state.cov};
  GaussianT<Eigen::MatrixXd> r = cubature_step(model, s, u, dt, lambda, ctx, counters);
  return GaussianState(Eigen::VectorXd(r.mean.col(0)), std::move(r.cov));
}

namespace {

template <class StepFn>
std::vector<GaussianState> rollout_impl(const GaussianState& init,
                                        const Eigen::MatrixXd& controls, int steps,
                                        StepFn step) {
  if (controls.size() != 0 && controls.rows() < steps) {
    throw std::invalid_argument("rollout: not enough control rows");
  }
  std::vector<GaussianState> out;
  out.reserve(steps + 1);
  out.push_back(init);
  for (int k = 0; k < steps; ++k) {
    out.push_back(step(out.back(), control_row(controls, k)));
  }
  return out;
}

}  // namespace

std::vector<GaussianState> bmm_rollout(const NsdeModel& model, const GaussianState& init,
                                       const Eigen::MatrixXd& controls, double dt, int steps,
                                       MomentDiagnostics* diag, EvalCounters* counters) {
  return rollout_impl(init, controls, steps,
                      [&](const GaussianState& s, const Eigen::VectorXd& u) {
                        return bmm_step(model, s, u, dt, diag, counters);
                      });
}

std::vector<GaussianState> cubature_rollout(const NsdeModel& model, const GaussianState& init,
                                            const Eigen::MatrixXd& controls, double dt,
                                            int steps, double lambda, MomentDiagnostics* diag,
                                            EvalCounters* counters) {
  return rollout_impl(init, controls, steps,
                      [&](const GaussianState& s, const Eigen::VectorXd& u) {
                        return cubature_step(model, s, u, dt, lambda, diag, counters);
                      });
}

}  // namespace nsde
