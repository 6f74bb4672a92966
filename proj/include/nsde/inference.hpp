#pragma once

#include "nsde/solver.hpp"

#include <vector>

namespace nsde {

enum class InferenceMethod { Bmm, MonteCarlo, Cubature };

std::string to_string(InferenceMethod m);
InferenceMethod inference_method_from_string(const std::string& s);

/// Model plus the variational quantities learned alongside it: the shared
/// recognition scale rho (initial variance = softplus(rho), elementwise) and
/// the log observation noise variance log_c.
struct TrainableModel {
  NsdeModel model;
  Eigen::VectorXd rho;
  double log_c = 0.0;
  bool train_c = false;
};

/// Recognition posterior for a window starting at observation y0:
/// q(z0) = N(y0, diag(softplus(rho))).
GaussianState recognition_posterior(const TrainableModel& tm, const Eigen::VectorXd& y0);

/// KL(N(mu, diag(var)) || N(0, I)) in closed form.
double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& var);

/// E_{z~N(mu,Sigma)}[log N(y; z, c I)] in closed form.
double expected_gaussian_loglik(const Eigen::VectorXd& y, const GaussianState& z, double c);

struct ElboOptions {
  InferenceMethod method = InferenceMethod::Bmm;
  int mc_samples = 32;
  double lambda = 1.0;
  /// Seed for the Monte Carlo method's reparameterized noise.
  std::uint64_t mc_seed = 0;
};

/// Evidence lower bound of one observation window (rows of `window` are
/// y_0 .. y_s at spacing dt; controls is s x control_dim or empty), evaluated
/// without a tape.
double elbo(const TrainableModel& tm, const Eigen::MatrixXd& window,
            const Eigen::MatrixXd& controls, double dt, const ElboOptions& opts,
            EvalCounters* counters = nullptr);

// ---------------------------------------------------------------------------
// Parameter flattening. Order: drift affine layers (W then b, in layer
// order), diffusion affine layers, rho (D x 1), then log_c (1 x 1) when
// train_c is set. Used by both the optimizer and the tape construction.
// ---------------------------------------------------------------------------

std::vector<Eigen::MatrixXd> pack_params(const TrainableModel& tm);
void unpack_params(TrainableModel& tm, const std::vector<Eigen::MatrixXd>& params);

/// Gradient of the negative window ELBO with respect to the packed
/// parameters, via one taped forward/backward pass.
std::vector<Eigen::MatrixXd> elbo_gradient(const TrainableModel& tm,
                                           const Eigen::MatrixXd& window,
                                           const Eigen::MatrixXd& controls, double dt,
                                           const ElboOptions& opts,
                                           double* elbo_out = nullptr);

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long t = 0;
};

/// One Adam update, in place. Initializes the state lazily.
void adam_step(std::vector<Eigen::MatrixXd>& params,
               const std::vector<Eigen::MatrixXd>& grads, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  int window = 10;
  AdamConfig adam;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;
  InferenceMethod method = InferenceMethod::Bmm;
  int mc_samples = 32;
  double lambda = 1.0;
};

struct TrainResult {
  TrainableModel model;
  /// Mean window ELBO per epoch (higher is better).
  std::vector<double> elbo_history;
};

/// Minibatch Adam on the negative mean window ELBO. `series` holds one
/// observation matrix (N x D) per trajectory; `controls` is parallel (each
/// (N-1) x control_dim) or empty. Deterministic for a fixed seed.
TrainResult train(TrainableModel init, const std::vector<Eigen::MatrixXd>& series,
                  const std::vector<Eigen::MatrixXd>& controls, double dt,
                  const TrainConfig& cfg);

/// Predictive observation marginals y_k ~ N(mu_k, Sigma_k + c I) from a BMM
/// rollout started at the recognition posterior of y0.
std::vector<GaussianState> predict(const TrainableModel& tm, const Eigen::VectorXd& y0,
                                   const Eigen::MatrixXd& controls, double dt, int steps,
                                   EvalCounters* counters = nullptr);

}  // namespace nsde
