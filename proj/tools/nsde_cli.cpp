#include "nsde/benchmark.hpp"
#include "nsde/data_io.hpp"
#include "nsde/serialization.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace {

constexpr const char* kVersion = "nsde 1.0.0";

using nlohmann::json;

/// Raised for malformed configuration (exit code 2, like usage errors).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Read-through view over a JSON object that tracks key usage, so unknown
/// keys can be rejected after each command has pulled what it needs.
class ConfigView {
 public:
  explicit ConfigView(json j) : j_(std::move(j)) {
    if (!j_.is_object()) throw ConfigError("config: top level must be a JSON object");
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("config: missing required key '" + key + "'");
    return fetch<T>(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) {
      resolved_[key] = fallback;
      return fallback;
    }
    return fetch<T>(key);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    }
  }

  /// Input values plus the defaults that were filled in.
  const json& resolved() const { return resolved_; }

 private:
  template <class T>
  T fetch(const std::string& key) {
    seen_.insert(key);
    try {
      T v = j_.at(key).get<T>();
      resolved_[key] = v;
      return v;
    } catch (const json::exception&) {
      throw ConfigError("config: key '" + key + "' has the wrong type");
    }
  }

  json j_;
  json resolved_ = json::object();
  std::set<std::string> seen_;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "JSON configuration file");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (created if absent)")->required();
  cmd->add_option("--threads", args.threads, "worker threads (currently always 1)")
      ->check(CLI::PositiveNumber);
}

ConfigView load_config(const CommonArgs& args) {
  if (args.config_path.empty()) return ConfigView(json::object());
  return ConfigView(nsde::load_json(args.config_path));
}

void write_resolved(const CommonArgs& args, const std::string& command, const json& resolved) {
  json j{{"version", kVersion}, {"command", command}, {"config", resolved}};
  nsde::save_json(j, args.out_dir + "/resolved_config.json");
}

std::filesystem::path prepare_out(const CommonArgs& args) {
  std::filesystem::path dir(args.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

nsde::NetworkSpec default_network(int in_dim, int out_dim, int hidden, int hidden_layers,
                                  double keep_prob, bool final_relu, nsde::Rng& rng) {
  auto randm = [&](int r, int c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        m(i, j) = scale * rng.normal() / std::sqrt(static_cast<double>(c));
    return m;
  };
  nsde::NetworkSpec net;
  net.input_dim = in_dim;
  net.output_dim = out_dim;
  int dim = in_dim;
  for (int l = 0; l < hidden_layers; ++l) {
    nsde::LayerSpec fc;
    fc.kind = nsde::LayerKind::Affine;
    fc.weight = randm(hidden, dim, 1.0);
    fc.bias = randm(hidden, 1, 0.1);
    net.layers.push_back(std::move(fc));
    nsde::LayerSpec relu_l;
    relu_l.kind = nsde::LayerKind::Relu;
    net.layers.push_back(relu_l);
    nsde::LayerSpec drop;
    drop.kind = nsde::LayerKind::Dropout;
    drop.keep_prob = keep_prob;
    net.layers.push_back(drop);
    dim = hidden;
  }
  nsde::LayerSpec out;
  out.kind = nsde::LayerKind::Affine;
  out.weight = randm(out_dim, dim, final_relu ? 1.0 : 0.1);
  out.bias = randm(out_dim, 1, final_relu ? 0.5 : 0.1);
  net.layers.push_back(std::move(out));
  if (final_relu) {
    nsde::LayerSpec relu_l;
    relu_l.kind = nsde::LayerKind::Relu;
    net.layers.push_back(relu_l);
  }
  return net;
}

int run_generate(const CommonArgs& args) {
  ConfigView cfg = load_config(args);
  const std::string dataset = cfg.require<std::string>("dataset");
  const int series = cfg.get<int>("series", 32);
  const double t_end = cfg.get<double>("t_end", 10.0);
  const double dt_obs = cfg.get<double>("dt_obs", 0.05);
  const double dt_fine = cfg.get<double>("dt_fine", 1e-4);
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 0);
  cfg.reject_unknown();

  nsde::Dataset data;
  if (dataset == "lotka_volterra") {
    data = nsde::generate_lotka_volterra(series, t_end, dt_obs, dt_fine, seed);
  } else if (dataset == "double_well") {
    data = nsde::generate_double_well(series, t_end, dt_obs, dt_fine, seed);
  } else {
    throw ConfigError("config: dataset must be 'lotka_volterra' or 'double_well'");
  }
  prepare_out(args);
  nsde::save_dataset_csv(data, args.out_dir + "/dataset.csv");
  json manifest{{"dataset", dataset},
                {"series", data.series.size()},
                {"rows_per_series", data.series.front().rows()},
                {"dim", data.series.front().cols()},
                {"dt", data.dt},
                {"rejected", data.rejected}};
  nsde::save_json(manifest, args.out_dir + "/manifest.json");
  write_resolved(args, "generate", cfg.resolved());
  return 0;
}

int run_train(const CommonArgs& args) {
  ConfigView cfg = load_config(args);
  const std::string data_path = cfg.require<std::string>("data");
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 0);
  nsde::TrainConfig tc;
  tc.epochs = cfg.get<int>("epochs", 100);
  tc.batch_size = cfg.get<int>("batch_size", 16);
  tc.window = cfg.get<int>("window", 10);
  tc.adam.lr = cfg.get<double>("lr", 3e-3);
  tc.grad_clip = cfg.get<double>("grad_clip", 10.0);
  tc.seed = seed;
  tc.method = nsde::inference_method_from_string(cfg.get<std::string>("method", "bmm"));
  tc.mc_samples = cfg.get<int>("mc_samples", 32);
  tc.lambda = cfg.get<double>("lambda", 1.0);
  const int hidden = cfg.get<int>("hidden_width", 50);
  const double keep_prob = cfg.get<double>("dropout_keep", 0.8);
  const double c_init = cfg.get<double>("c_init", 1e-2);
  const bool train_c = cfg.get<bool>("train_c", false);
  const bool with_diffusion = cfg.get<bool>("diffusion", true);
  cfg.reject_unknown();

  nsde::Dataset data = nsde::load_dataset_csv(data_path);
  const int d = static_cast<int>(data.series.front().cols());

  nsde::TrainableModel init;
  init.model.latent_dim = d;
  nsde::Rng arch_rng = nsde::Rng::substream(seed, 0x61726368);
  init.model.drift = default_network(d, d, hidden, 2, keep_prob, false, arch_rng);
  if (with_diffusion) {
    init.model.diffusion = default_network(d, d, hidden, 1, keep_prob, true, arch_rng);
  }
  init.rho = Eigen::VectorXd::Constant(d, -3.0);
  init.log_c = std::log(c_init);
  init.train_c = train_c;

  nsde::TrainResult result = nsde::train(init, data.series, {}, data.dt, tc);

  prepare_out(args);
  nsde::save_json(nsde::checkpoint_to_json(result.model, cfg.resolved()),
                  args.out_dir + "/checkpoint.json");
  {
    std::ofstream hist(args.out_dir + "/training_history.csv");
    hist << "epoch,elbo\n";
    hist.precision(17);
    for (std::size_t e = 0; e < result.elbo_history.size(); ++e) {
      hist << e << "," << result.elbo_history[e] << "\n";
    }
  }
  write_resolved(args, "train", cfg.resolved());
  return 0;
}

int run_predict(const CommonArgs& args) {
  ConfigView cfg = load_config(args);
  const std::string checkpoint_path = cfg.require<std::string>("checkpoint");
  const std::string data_path = cfg.require<std::string>("data");
  const int series_index = cfg.get<int>("series_index", 0);
  const int start = cfg.get<int>("start", 0);
  const int horizon = cfg.get<int>("horizon", 10);
  const std::string method = cfg.get<std::string>("method", "bmm");
  const int particles = cfg.get<int>("particles", 32);
  const double lambda = cfg.get<double>("lambda", 1.0);
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 0);
  cfg.reject_unknown();

  nsde::TrainableModel tm = nsde::checkpoint_from_json(nsde::load_json(checkpoint_path));
  nsde::Dataset data = nsde::load_dataset_csv(data_path);
  if (series_index < 0 || series_index >= static_cast<int>(data.series.size())) {
    throw ConfigError("config: series_index out of range");
  }
  const Eigen::MatrixXd& series = data.series[series_index];
  if (start < 0 || start >= series.rows()) throw ConfigError("config: start out of range");
  const Eigen::VectorXd y0 = series.row(start).transpose();

  prepare_out(args);
  if (method == "bmm" || method == "cubature") {
    std::vector<nsde::GaussianState> rollout;
    if (method == "bmm") {
      rollout = nsde::predict(tm, y0, Eigen::MatrixXd(), data.dt, horizon);
    } else {
      nsde::GaussianState q = nsde::recognition_posterior(tm, y0);
      rollout = nsde::cubature_rollout(tm.model, q, Eigen::MatrixXd(), data.dt, horizon, lambda);
      const double c = std::exp(tm.log_c);
      for (auto& g : rollout) {
        g.cov += c * Eigen::MatrixXd::Identity(g.dim(), g.dim());
      }
    }
    nsde::save_gaussian_rollout_csv(rollout, data.dt, args.out_dir + "/prediction.csv");
  } else if (method == "mc") {
    nsde::GaussianState q = nsde::recognition_posterior(tm, y0);
    nsde::Rng rng = nsde::Rng::substream(seed, 0x70726564);
    Eigen::MatrixXd z0 = nsde::sample_gaussian(q, particles, rng);
    nsde::ParticleRollout roll =
        nsde::mc_rollout(tm.model, z0, Eigen::MatrixXd(), data.dt, horizon, seed);
    nsde::save_particle_rollout_csv(roll, data.dt, args.out_dir + "/prediction.csv");
  } else {
    throw ConfigError("config: method must be 'bmm', 'mc', or 'cubature'");
  }
  write_resolved(args, "predict", cfg.resolved());
  return 0;
}

int run_benchmark(const CommonArgs& args) {
  ConfigView cfg = load_config(args);
  const std::string checkpoint_path = cfg.require<std::string>("checkpoint");
  const std::string data_path = cfg.require<std::string>("data");
  const int horizon = cfg.get<int>("horizon", 10);
  const std::vector<int> particle_counts =
      cfg.get<std::vector<int>>("particle_counts", {1, 2, 4, 8, 16, 32, 64, 128});
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 0);
  cfg.reject_unknown();

  nsde::TrainableModel tm = nsde::checkpoint_from_json(nsde::load_json(checkpoint_path));
  nsde::Dataset data = nsde::load_dataset_csv(data_path);
  std::vector<nsde::CalibrationRow> rows =
      nsde::benchmark_calibration(tm, data.series, data.dt, horizon, particle_counts, seed);

  prepare_out(args);
  std::ofstream out(args.out_dir + "/benchmark.csv");
  out << "method,particles,ecpe,mse,nll,drift_evals\n";
  out.precision(17);
  for (const auto& row : rows) {
    out << row.method << "," << row.particles << "," << row.ecpe << "," << row.mse << ","
        << row.nll << "," << row.drift_evals << "\n";
  }
  write_resolved(args, "benchmark", cfg.resolved());
  return 0;
}

int run_ablate(const CommonArgs& args) {
  ConfigView cfg = load_config(args);
  const std::vector<int> dims = cfg.get<std::vector<int>>("dims", {2, 8});
  const std::vector<int> widths = cfg.get<std::vector<int>>("widths", {16, 64, 256});
  const int reps = cfg.get<int>("reps", 3);
  const int mc_samples = cfg.get<int>("mc_samples", 1000000);
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 0);
  cfg.reject_unknown();

  std::vector<nsde::AblationRow> rows =
      nsde::ablate_vmm_vs_cubature(dims, widths, reps, mc_samples, seed);

  prepare_out(args);
  std::ofstream out(args.out_dir + "/ablation.csv");
  out << "dim,width,method,mean_err,cov_err,seconds\n";
  out.precision(17);
  for (const auto& row : rows) {
    out << row.dim << "," << row.width << "," << row.method << "," << row.mean_err << ","
        << row.cov_err << "," << row.seconds << "\n";
  }
  write_resolved(args, "ablate", cfg.resolved());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural SDE toolkit: moment-matched inference, training, and baselines"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, pred_args, bench_args, abl_args;
  CLI::App* gen = app.add_subcommand("generate", "simulate a synthetic dataset");
  add_common(gen, gen_args);
  CLI::App* trn = app.add_subcommand("train", "fit a model with the variational objective");
  add_common(trn, train_args);
  CLI::App* prd = app.add_subcommand("predict", "roll a trained model forward");
  add_common(prd, pred_args);
  CLI::App* bch = app.add_subcommand("benchmark", "calibration vs particle count");
  add_common(bch, bench_args);
  CLI::App* abl = app.add_subcommand("ablate", "moment propagation accuracy/cost study");
  add_common(abl, abl_args, /*config_required=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_generate(gen_args);
    if (trn->parsed()) return run_train(train_args);
    if (prd->parsed()) return run_predict(pred_args);
    if (bch->parsed()) return run_benchmark(bench_args);
    if (abl->parsed()) return run_ablate(abl_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
