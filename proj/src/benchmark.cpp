#include "nsde/benchmark.hpp"

#include "nsde/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace nsde {

namespace {

struct PooledScores {
  std::vector<GaussianState> pred;
  std::vector<Eigen::VectorXd> truth;

  void add(const GaussianState& p, const Eigen::VectorXd& t) {
    pred.push_back(p);
    truth.push_back(t);
  }

  CalibrationRow score(std::string method, int particles, std::uint64_t drift_evals) const {
    CalibrationRow row;
    row.method = std::move(method);
    row.particles = particles;
    Eigen::MatrixXd truth_rows(truth.size(), truth.front().size());
    for (std::size_t i = 0; i < truth.size(); ++i) truth_rows.row(i) = truth[i].transpose();
    row.ecpe = nsde::ecpe(pred, truth);
    row.mse = nsde::mse(pred, truth_rows);
    row.nll = nsde::nll(pred, truth_rows);
    row.drift_evals = drift_evals;
    return row;
  }
};

}  // namespace

std::vector<CalibrationRow> benchmark_calibration(const TrainableModel& tm,
                                                  const std::vector<Eigen::MatrixXd>& test,
                                                  double dt, int horizon,
                                                  const std::vector<int>& particle_counts,
                                                  std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("benchmark_calibration: no test series");
  if (horizon < 1) throw std::invalid_argument("benchmark_calibration: horizon must be >= 1");
  const int d = tm.model.latent_dim;
  const double c = std::exp(tm.log_c);
  const Eigen::MatrixXd noise = c * Eigen::MatrixXd::Identity(d, d);

  std::vector<CalibrationRow> rows;

  // Deterministic moment propagation.
  {
    PooledScores pool;
    EvalCounters counters;
    for (const Eigen::MatrixXd& series : test) {
      for (int o = 0; o + horizon < series.rows(); o += horizon) {
        std::vector<GaussianState> pred =
            predict(tm, series.row(o).transpose(), Eigen::MatrixXd(), dt, horizon, &counters);
        for (int k = 1; k <= horizon; ++k) {
          pool.add(pred[k], series.row(o + k).transpose());
        }
      }
    }
    rows.push_back(pool.score("bmm", 0, counters.drift_evals));
  }

  // Particle ensembles of increasing size, Gaussian-fitted per step.
  for (int particles : particle_counts) {
    PooledScores pool;
    EvalCounters counters;
    std::uint64_t window_id = 0;
    for (const Eigen::MatrixXd& series : test) {
      for (int o = 0; o + horizon < series.rows(); o += horizon, ++window_id) {
        const Eigen::VectorXd y0 = series.row(o).transpose();
        GaussianState q = recognition_posterior(tm, y0);
        Rng init_rng = Rng::substream(seed, 0x696e6974, window_id);
        Eigen::MatrixXd z0 = (particles == 1) ? Eigen::MatrixXd(y0.transpose())
                                              : sample_gaussian(q, particles, init_rng);
        ParticleRollout roll = mc_rollout(tm.model, z0, Eigen::MatrixXd(), dt, horizon,
                                          Rng::substream(seed, window_id).next_u64(),
                                          &counters);
        for (int k = 1; k <= horizon; ++k) {
          GaussianState marginal =
              (particles == 1)
                  ? GaussianState(roll.states[k].row(0).transpose(),
                                  Eigen::MatrixXd::Zero(d, d))
                  : ensemble_moments(roll.states[k]);
          marginal.cov += noise;
          pool.add(marginal, series.row(o + k).transpose());
        }
      }
    }
    rows.push_back(pool.score("mc", particles, counters.drift_evals));
  }
  return rows;
}

namespace {

NetworkSpec random_net(int dim, int width, bool tanh_variant, Rng& rng) {
  auto randm = [&](int r, int c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        m(i, j) = scale * rng.normal() / std::sqrt(static_cast<double>(c));
    return m;
  };
  NetworkSpec net;
  net.input_dim = dim;
  net.output_dim = dim;
  LayerSpec l1;
  l1.kind = LayerKind::Affine;
  l1.weight = randm(width, dim, 1.0);
  l1.bias = randm(width, 1, 0.5);
  net.layers.push_back(std::move(l1));
  LayerSpec act;
  act.kind = tanh_variant ? LayerKind::Tanh : LayerKind::Relu;
  net.layers.push_back(act);
  if (!tanh_variant) {
    LayerSpec drop;
    drop.kind = LayerKind::Dropout;
    drop.keep_prob = 0.8;
    net.layers.push_back(drop);
  }
  LayerSpec l2;
  l2.kind = LayerKind::Affine;
  l2.weight = randm(dim, width, 1.0);
  l2.bias = randm(dim, 1, 0.5);
  net.layers.push_back(std::move(l2));
  return net;
}

GaussianState random_input(int dim, Rng& rng) {
  Eigen::VectorXd mean(dim);
  for (int i = 0; i < dim; ++i) mean(i) = rng.normal();
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = rng.normal() / std::sqrt(static_cast<double>(dim));
  return GaussianState(mean, g * g.transpose() + 1e-6 * Eigen::MatrixXd::Identity(dim, dim));
}

/// Seeded Monte Carlo moments of net(x), x ~ in. Dropout layers sample real
/// masks. Processes samples in chunks to bound memory.
GaussianState mc_network_moments(const NetworkSpec& net, const GaussianState& in, int samples,
                                 Rng& rng) {
  const int d_out = net.output_dim;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d_out);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(d_out, d_out);
  const int chunk = 20000;
  int remaining = samples;
  while (remaining > 0) {
    const int n = std::min(chunk, remaining);
    remaining -= n;
    Eigen::MatrixXd x = sample_gaussian(in, n, rng);
    for (const LayerSpec& layer : net.layers) {
      switch (layer.kind) {
        case LayerKind::Affine:
          x = (x * layer.weight.transpose()).rowwise() + layer.bias.col(0).transpose();
          break;
        case LayerKind::Relu:
          x = x.cwiseMax(0.0);
          break;
        case LayerKind::Tanh:
          x = x.array().tanh();
          break;
        case LayerKind::Dropout: {
          const double q = layer.keep_prob;
          for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
              x(i, j) = (rng.uniform() < q) ? x(i, j) / q : 0.0;
            }
          }
          break;
        }
      }
    }
    sum += x.colwise().sum().transpose();
    outer += x.transpose() * x;
  }
  Eigen::VectorXd mean = sum / static_cast<double>(samples);
  Eigen::MatrixXd cov =
      outer / static_cast<double>(samples - 1) -
      mean * mean.transpose() * (static_cast<double>(samples) / (samples - 1.0));
  return GaussianState(std::move(mean), std::move(cov));
}

/// Unscented-transform moments of net(x), x ~ in (lambda = 1).
GaussianState ut_network_moments(const NetworkSpec& net, const GaussianState& in) {
  const int d = static_cast<int>(in.dim());
  const double lambda = 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(in.cov + 1e-12 * Eigen::MatrixXd::Identity(d, d));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("ut_network_moments: covariance factorization failed");
  }
  Eigen::MatrixXd root = llt.matrixL();
  const double scale = std::sqrt(lambda + d);
  std::vector<Eigen::VectorXd> points{in.mean};
  for (int i = 0; i < d; ++i) {
    points.push_back(in.mean + scale * root.col(i));
    points.push_back(in.mean - scale * root.col(i));
  }
  std::vector<double> weights{lambda / (d + lambda)};
  weights.resize(points.size(), 1.0 / (2.0 * (d + lambda)));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(net.output_dim);
  std::vector<Eigen::VectorXd> mapped;
  for (std::size_t i = 0; i < points.size(); ++i) {
    mapped.push_back(network_forward(net, points[i]));
    mean += weights[i] * mapped.back();
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(net.output_dim, net.output_dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::VectorXd delta = mapped[i] - mean;
    cov += weights[i] * delta * delta.transpose();
  }
  return GaussianState(std::move(mean), std::move(cov));
}

double median5(std::array<double, 5> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[2];
}

}  // namespace

std::vector<AblationRow> ablate_vmm_vs_cubature(const std::vector<int>& dims,
                                                const std::vector<int>& widths, int reps,
                                                int mc_samples, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  std::vector<AblationRow> rows;
  for (int dim : dims) {
    for (int width : widths) {
      AblationRow vmm_row{dim, width, "vmm", 0.0, 0.0, 0.0};
      AblationRow cub_row{dim, width, "cubature", 0.0, 0.0, 0.0};
      for (int rep = 0; rep < reps; ++rep) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(dim) * 131 + width,
                                 static_cast<std::uint64_t>(rep));
        GaussianState in = random_input(dim, rng);

        NetworkSpec relu_net = random_net(dim, width, false, rng);
        GaussianState truth = mc_network_moments(relu_net, in, mc_samples, rng);
        GaussianState approx;
        std::array<double, 5> times{};
        for (int t = -1; t < 5; ++t) {  // one warmup run, then five timed
          const auto t0 = clock::now();
          approx = vmm_forward(relu_net, in);
          const auto t1 = clock::now();
          if (t >= 0) times[t] = std::chrono::duration<double>(t1 - t0).count();
        }
        vmm_row.mean_err += (approx.mean - truth.mean).norm() / (truth.mean.norm() + 1e-12);
        vmm_row.cov_err += (approx.cov - truth.cov).norm() / (truth.cov.norm() + 1e-12);
        vmm_row.seconds += median5(times);

        NetworkSpec tanh_net = random_net(dim, width, true, rng);
        GaussianState tanh_truth = mc_network_moments(tanh_net, in, mc_samples, rng);
        for (int t = -1; t < 5; ++t) {
          const auto t0 = clock::now();
          approx = ut_network_moments(tanh_net, in);
          const auto t1 = clock::now();
          if (t >= 0) times[t] = std::chrono::duration<double>(t1 - t0).count();
        }
        cub_row.mean_err +=
            (approx.mean - tanh_truth.mean).norm() / (tanh_truth.mean.norm() + 1e-12);
        cub_row.cov_err +=
            (approx.cov - tanh_truth.cov).norm() / (tanh_truth.cov.norm() + 1e-12);
        cub_row.seconds += median5(times);
      }
      const double inv = 1.0 / static_cast<double>(reps);
      for (AblationRow* r : {&vmm_row, &cub_row}) {
        r->mean_err *= inv;
        r->cov_err *= inv;
        r->seconds *= inv;
      }
      rows.push_back(std::move(vmm_row));
      rows.push_back(std::move(cub_row));
    }
  }
  return rows;
}

}  // namespace nsde
