#include "nsde/inference.hpp"

#include <algorithm>
#include <cmath>

namespace nsde {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594;
}

std::string to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::Bmm:
      return "bmm";
    case InferenceMethod::MonteCarlo:
      return "mc";
    case InferenceMethod::Cubature:
      return "cubature";
  }
  throw std::logic_error("unreachable");
}

InferenceMethod inference_method_from_string(const std::string& s) {
  if (s == "bmm") return InferenceMethod::Bmm;
  if (s == "mc") return InferenceMethod::MonteCarlo;
  if (s == "cubature") return InferenceMethod::Cubature;
  throw std::invalid_argument("unknown inference method: " + s);
}

GaussianState recognition_posterior(const TrainableModel& tm, const Eigen::VectorXd& y0) {
  Eigen::VectorXd var = tm.rho.unaryExpr(
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
  return GaussianState(y0, Eigen::MatrixXd(var.asDiagonal()));
}

double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& var) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    kl += var(i) + mu(i) * mu(i) - 1.0 - std::log(var(i));
  }
  return 0.5 * kl;
}

double expected_gaussian_loglik(const Eigen::VectorXd& y, const GaussianState& z, double c) {
  const double d = static_cast<double>(y.size());
  const double quad = (y - z.mean).squaredNorm() + z.cov.trace();
  return -0.5 * quad / c - 0.5 * d * (kLog2Pi + std::log(c));
}

// ---------------------------------------------------------------------------
// Backend-generic window ELBO.
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd control_row(const Eigen::MatrixXd& controls, int k) {
  if (controls.size() == 0) return Eigen::VectorXd();
  return controls.row(k).transpose();
}

/// -(1/(2c)) * quad - (d/2) log(2 pi c), all as 1x1 backend values.
template <class M, class Ctx>
M loglik_term(const M& quad, const M& log_c, const M& c, double d, const Ctx& ctx) {
  M half = ctx.lift(Eigen::MatrixXd::Constant(1, 1, 0.5));
  M fit = neg(bscale(quad, cdiv(half, c)));
  return sub(fit, smul(sadd(log_c, kLog2Pi), 0.5 * d));
}

template <class M, class Ctx>
M window_elbo_t(const ModelT<M>& model, const M& rho, const M& log_c,
                const Eigen::MatrixXd& window, const Eigen::MatrixXd& controls, double dt,
                const ElboOptions& opts, const Ctx& ctx, EvalCounters* counters) {
  const int steps = static_cast<int>(window.rows()) - 1;
  const int d = static_cast<int>(window.cols());
  if (steps < 1) throw std::invalid_argument("elbo: window needs at least two rows");
  if (controls.size() != 0 && controls.rows() < steps) {
    throw std::invalid_argument("elbo: not enough control rows");
  }
  const Eigen::VectorXd y0 = window.row(0).transpose();
  M var0 = softplus(rho);
  M c = cexp(log_c);

  // KL of the recognition posterior against the standard normal prior.
  Eigen::MatrixXd mu0_sq = y0.array().square().matrix();
  M kl = smul(sum(sub(sadd(add(var0, ctx.lift(mu0_sq)), -1.0), clog(var0))), 0.5);

  M fit;
  if (opts.method == InferenceMethod::MonteCarlo) {
    if (opts.mc_samples < 1) throw std::invalid_argument("elbo: mc_samples must be >= 1");
    M sqrt_var0 = csqrt(var0);
    M mean0 = ctx.lift(Eigen::MatrixXd(y0));
    const double noise_scale = std::sqrt(dt);
    bool first = true;
    for (int s = 0; s < opts.mc_samples; ++s) {
      Rng rng = Rng::substream(opts.mc_seed, static_cast<std::uint64_t>(s));
      Eigen::MatrixXd eps(d, 1);
      for (int i = 0; i < d; ++i) eps(i, 0) = rng.normal();
      M z = add(mean0, cmul(sqrt_var0, ctx.lift(eps)));
      M sample_fit = loglik_term(squared_norm(sub(ctx.lift(Eigen::MatrixXd(y0)), z)), log_c,
                                 c, d, ctx);
      for (int k = 0; k < steps; ++k) {
        const Eigen::VectorXd u = control_row(controls, k);
        M in = z;
        if (model.control_dim > 0) in = concat_rows(in, ctx.lift(Eigen::MatrixXd(u)));
        M f = network_point_forward(model.drift, in, ctx);
        if (counters != nullptr) counters->drift_evals += 1;
        z = add(z, smul(f, dt));
        if (model.diffusion.has_value()) {
          Eigen::MatrixXd dw(d, 1);
          for (int i = 0; i < d; ++i) dw(i, 0) = rng.normal() * noise_scale;
          M l = network_point_forward(*model.diffusion, in, ctx);
          if (counters != nullptr) counters->diffusion_evals += 1;
          z = add(z, cmul(l, ctx.lift(dw)));
        }
        Eigen::MatrixXd yk = window.row(k + 1).transpose();
        sample_fit =
            add(sample_fit, loglik_term(squared_norm(sub(ctx.lift(yk), z)), log_c, c, d, ctx));
      }
      fit = first ? sample_fit : add(fit, sample_fit);
      first = false;
    }
    fit = smul(fit, 1.0 / static_cast<double>(opts.mc_samples));
  } else {
    GaussianT<M> state{ctx.lift(Eigen::MatrixXd(y0)), diag_mat(var0)};
    auto fit_term = [&](const Eigen::VectorXd& y, const GaussianT<M>& st) {
      M quad = add(squared_norm(sub(ctx.lift(Eigen::MatrixXd(y)), st.mean)), trace(st.cov));
      return loglik_term(quad, log_c, c, d, ctx);
    };
    fit = fit_term(y0, state);
    for (int k = 0; k < steps; ++k) {
      const Eigen::VectorXd u = control_row(controls, k);
      state = (opts.method == InferenceMethod::Bmm)
                  ? bmm_step(model, state, u, dt, ctx, counters)
                  : cubature_step(model, state, u, dt, opts.lambda, ctx, counters);
      fit = add(fit, fit_term(window.row(k + 1).transpose(), state));
    }
  }
  return sub(fit, kl);
}

}  // namespace

double elbo(const TrainableModel& tm, const Eigen::MatrixXd& window,
            const Eigen::MatrixXd& controls, double dt, const ElboOptions& opts,
            EvalCounters* counters) {
  PlainCtx ctx{nullptr};
  Eigen::MatrixXd rho = tm.rho;
  Eigen::MatrixXd log_c = Eigen::MatrixXd::Constant(1, 1, tm.log_c);
  return window_elbo_t(tm.model, rho, log_c, window, controls, dt, opts, ctx, counters)(0, 0);
}

// ---------------------------------------------------------------------------
// Parameter flattening and the taped gradient.
// ---------------------------------------------------------------------------

namespace {

template <class Model, class Fn>
void for_each_affine(Model& model, Fn fn) {
  for (auto& layer : model.drift.layers) {
    if (layer.kind == LayerKind::Affine) fn(layer);
  }
  if (model.diffusion.has_value()) {
    for (auto& layer : model.diffusion->layers) {
      if (layer.kind == LayerKind::Affine) fn(layer);
    }
  }
}

}  // namespace

std::vector<Eigen::MatrixXd> pack_params(const TrainableModel& tm) {
  std::vector<Eigen::MatrixXd> out;
  for_each_affine(tm.model, [&](const LayerSpec& layer) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  });
  out.push_back(tm.rho);
  if (tm.train_c) out.push_back(Eigen::MatrixXd::Constant(1, 1, tm.log_c));
  return out;
}

void unpack_params(TrainableModel& tm, const std::vector<Eigen::MatrixXd>& params) {
  std::size_t i = 0;
  for_each_affine(tm.model, [&](LayerSpec& layer) {
    layer.weight = params.at(i++);
    layer.bias = params.at(i++);
  });
  tm.rho = params.at(i++).col(0);
  if (tm.train_c) tm.log_c = params.at(i++)(0, 0);
  if (i != params.size()) throw std::invalid_argument("unpack_params: length mismatch");
}

namespace {

struct TapedModel {
  ModelT<ad::Value> model;
  ad::Value rho;
  ad::Value log_c;
  std::vector<ad::Value> leaves;  // pack_params order
};

NetworkT<ad::Value> lift_network(ad::Tape& tape, const NetworkSpec& net,
                                 std::vector<ad::Value>& leaves) {
  NetworkT<ad::Value> out;
  out.input_dim = net.input_dim;
  out.output_dim = net.output_dim;
  for (const LayerSpec& layer : net.layers) {
    LayerT<ad::Value> lifted;
    lifted.kind = layer.kind;
    lifted.keep_prob = layer.keep_prob;
    if (layer.kind == LayerKind::Affine) {
      lifted.weight = tape.leaf(layer.weight);
      lifted.bias = tape.leaf(layer.bias);
      leaves.push_back(lifted.weight);
      leaves.push_back(lifted.bias);
    }
    out.layers.push_back(std::move(lifted));
  }
  return out;
}

TapedModel lift_model(ad::Tape& tape, const TrainableModel& tm) {
  TapedModel out;
  out.model.latent_dim = tm.model.latent_dim;
  out.model.control_dim = tm.model.control_dim;
  out.model.drift = lift_network(tape, tm.model.drift, out.leaves);
  if (tm.model.diffusion.has_value()) {
    out.model.diffusion = lift_network(tape, *tm.model.diffusion, out.leaves);
  }
  out.rho = tape.leaf(Eigen::MatrixXd(tm.rho));
  out.leaves.push_back(out.rho);
  Eigen::MatrixXd lc = Eigen::MatrixXd::Constant(1, 1, tm.log_c);
  if (tm.train_c) {
    out.log_c = tape.leaf(lc);
    out.leaves.push_back(out.log_c);
  } else {
    out.log_c = tape.constant(lc);
  }
  return out;
}

}  // namespace

std::vector<Eigen::MatrixXd> elbo_gradient(const TrainableModel& tm,
                                           const Eigen::MatrixXd& window,
                                           const Eigen::MatrixXd& controls, double dt,
                                           const ElboOptions& opts, double* elbo_out) {
  ad::Tape tape;
  TapedModel taped = lift_model(tape, tm);
  AdCtx ctx{&tape, nullptr};
  ad::Value e = window_elbo_t(taped.model, taped.rho, taped.log_c, window, controls, dt, opts,
                              ctx, nullptr);
  if (elbo_out != nullptr) *elbo_out = e.val()(0, 0);
  ad::Value loss = ad::neg(e);
  tape.backward(loss);
  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(taped.leaves.size());
  for (const ad::Value& leaf : taped.leaves) grads.push_back(tape.grad(leaf));
  return grads;
}

// ---------------------------------------------------------------------------
// Optimizer and training loop.
// ---------------------------------------------------------------------------

void adam_step(std::vector<Eigen::MatrixXd>& params,
               const std::vector<Eigen::MatrixXd>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k].array().matrix() +
                 (1.0 - cfg.beta2) * grads[k].array().square().matrix();
    Eigen::ArrayXXd mhat = state.m[k].array() / bc1;
    Eigen::ArrayXXd vhat = state.v[k].array() / bc2;
    params[k].array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
  }
}

TrainResult train(TrainableModel init, const std::vector<Eigen::MatrixXd>& series,
                  const std::vector<Eigen::MatrixXd>& controls, double dt,
                  const TrainConfig& cfg) {
  validate_model(init.model);
  if (series.empty()) throw std::invalid_argument("train: no series given");
  if (!controls.empty() && controls.size() != series.size()) {
    throw std::invalid_argument("train: controls must be absent or parallel to series");
  }
  const int s = cfg.window;
  if (s < 1) throw std::invalid_argument("train: window must be >= 1");

  std::vector<Eigen::MatrixXd> params = pack_params(init);
  AdamState adam;
  TrainResult result;
  result.model = std::move(init);

  struct WindowRef {
    int series;
    int offset;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::substream(cfg.seed, 0x7261696e, static_cast<std::uint64_t>(epoch));
    std::vector<WindowRef> windows;
    for (std::size_t i = 0; i < series.size(); ++i) {
      const int n = static_cast<int>(series[i].rows());
      if (n < s + 1) throw std::invalid_argument("train: series shorter than one window");
      const int count = (n - 1) / s;
      const int max_offset = n - 1 - s;
      for (int w = 0; w < count; ++w) {
        const int off =
            (max_offset == 0)
                ? 0
                : static_cast<int>(rng.uniform() * static_cast<double>(max_offset + 1));
        windows.push_back({static_cast<int>(i), std::min(off, max_offset)});
      }
    }
    // Fisher-Yates with the epoch stream, so batch composition is seeded.
    for (std::size_t i = windows.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(windows[i - 1], windows[std::min(j, i - 1)]);
    }

    double epoch_elbo = 0.0;
    std::size_t done = 0;
    while (done < windows.size()) {
      const std::size_t batch_end = std::min(done + static_cast<std::size_t>(cfg.batch_size),
                                             windows.size());
      std::vector<Eigen::MatrixXd> grad_sum;
      for (std::size_t w = done; w < batch_end; ++w) {
        const WindowRef& ref = windows[w];
        const Eigen::MatrixXd& y = series[ref.series];
        Eigen::MatrixXd window = y.block(ref.offset, 0, s + 1, y.cols());
        Eigen::MatrixXd u;
        if (!controls.empty() && controls[ref.series].size() != 0) {
          u = controls[ref.series].block(ref.offset, 0, s, controls[ref.series].cols());
        }
        ElboOptions opts;
        opts.method = cfg.method;
        opts.mc_samples = cfg.mc_samples;
        opts.lambda = cfg.lambda;
        opts.mc_seed = rng.next_u64();
        double e = 0.0;
        std::vector<Eigen::MatrixXd> g =
            elbo_gradient(result.model, window, u, dt, opts, &e);
        epoch_elbo += e;
        if (grad_sum.empty()) {
          grad_sum = std::move(g);
        } else {
          for (std::size_t k = 0; k < grad_sum.size(); ++k) grad_sum[k] += g[k];
        }
      }
      const double inv = 1.0 / static_cast<double>(batch_end - done);
      double norm_sq = 0.0;
      for (auto& g : grad_sum) {
        g *= inv;
        norm_sq += g.squaredNorm();
      }
      const double norm = std::sqrt(norm_sq);
      if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
        const double scale = cfg.grad_clip / norm;
        for (auto& g : grad_sum) g *= scale;
      }
      adam_step(params, grad_sum, adam, cfg.adam);
      unpack_params(result.model, params);
      done = batch_end;
    }
    result.elbo_history.push_back(epoch_elbo / static_cast<double>(windows.size()));
  }
  return result;
}

std::vector<GaussianState> predict(const TrainableModel& tm, const Eigen::VectorXd& y0,
                                   const Eigen::MatrixXd& controls, double dt, int steps,
                                   EvalCounters* counters) {
  MomentDiagnostics diag;
  GaussianState z0 = recognition_posterior(tm, y0);
  std::vector<GaussianState> latent =
      bmm_rollout(tm.model, z0, controls, dt, steps, &diag, counters);
  const double c = std::exp(tm.log_c);
  Eigen::MatrixXd noise = c * Eigen::MatrixXd::Identity(y0.size(), y0.size());
  for (GaussianState& g : latent) g.cov += noise;
  return latent;
}

}  // namespace nsde
