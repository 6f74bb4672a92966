#include "nsde/data_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nsde {

namespace {

long positive_steps(double t_end, double dt, const char* what) {
  if (!(dt > 0.0) || !(t_end > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": spacing and horizon must be positive");
  }
  const double raw = t_end / dt;
  const long n = std::lround(raw);
  if (n < 1 || std::fabs(raw - static_cast<double>(n)) > 1e-6 * raw) {
    throw std::invalid_argument(std::string(what) + ": horizon must be a multiple of the step");
  }
  return n;
}

/// Simulates one trajectory on the fine grid, recording every `stride` steps.
/// Returns false if the trajectory leaves the admissible box.
template <class DriftFn, class InsideFn>
bool simulate_fine(DriftFn drift, InsideFn inside, const Eigen::MatrixXd& noise_factor,
                   Eigen::VectorXd x, double dt_fine, long n_fine, long stride, Rng& rng,
                   Eigen::MatrixXd& out) {
  const int d = static_cast<int>(x.size());
  const double root_dt = std::sqrt(dt_fine);
  long row = 0;
  out.row(row++) = x.transpose();
  Eigen::VectorXd eps(d);
  for (long k = 1; k <= n_fine; ++k) {
    for (int i = 0; i < d; ++i) eps(i) = rng.normal();
    x += drift(x) * dt_fine + noise_factor * (root_dt * eps);
    if (!inside(x)) return false;
    if (k % stride == 0) out.row(row++) = x.transpose();
  }
  return true;
}

template <class DriftFn, class InsideFn, class InitFn>
Dataset generate(int n_series, double t_end, double dt_obs, double dt_fine, std::uint64_t seed,
                 int dim, DriftFn drift, InsideFn inside, InitFn init,
                 const Eigen::MatrixXd& noise_factor) {
  if (n_series < 1) throw std::invalid_argument("generate: need at least one series");
  const long n_fine = positive_steps(t_end, dt_fine, "generate");
  const long n_obs = positive_steps(t_end, dt_obs, "generate");
  if (n_fine % n_obs != 0) {
    throw std::invalid_argument("generate: observation spacing must be a multiple of dt_fine");
  }
  const long stride = n_fine / n_obs;
  Dataset data;
  data.dt = dt_obs;
  data.series.reserve(n_series);
  for (int s = 0; s < n_series; ++s) {
    Eigen::MatrixXd traj(n_obs + 1, dim);
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 1000) throw std::runtime_error("generate: too many rejected trajectories");
      Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(s), attempt);
      if (simulate_fine(drift, inside, noise_factor, init(rng), dt_fine, n_fine, stride, rng,
                        traj)) {
        break;
      }
      data.rejected += 1;
    }
    data.series.push_back(std::move(traj));
  }
  return data;
}

}  // namespace

Dataset generate_lotka_volterra(int n_series, double t_end, double dt_obs, double dt_fine,
                                std::uint64_t seed) {
  Eigen::Matrix2d q;
  q << 0.05, 0.03, 0.03, 0.09;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(q);
  Eigen::MatrixXd root = es.operatorSqrt();
  auto drift = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd f(2);
    f(0) = 2.0 * x(0) - x(0) * x(1);
    f(1) = x(0) * x(1) - 4.0 * x(1);
    return f;
  };
  auto inside = [](const Eigen::VectorXd& x) {
    return x(0) >= 0.0 && x(0) <= 1e3 && x(1) >= 0.0 && x(1) <= 1e3;
  };
  auto init = [](Rng& rng) {
    Eigen::VectorXd x(2);
    x(0) = 1.0 + 3.0 * rng.uniform();
    x(1) = 1.0 + 3.0 * rng.uniform();
    return x;
  };
  return generate(n_series, t_end, dt_obs, dt_fine, seed, 2, drift, inside, init, root);
}

Dataset generate_double_well(int n_series, double t_end, double dt_obs, double dt_fine,
                             std::uint64_t seed) {
  Eigen::MatrixXd root = Eigen::MatrixXd::Identity(1, 1);
  auto drift = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd f(1);
    f(0) = 4.0 * x(0) * (1.0 - x(0) * x(0));
    return f;
  };
  auto inside = [](const Eigen::VectorXd& x) { return std::fabs(x(0)) <= 1e3; };
  auto init = [](Rng& rng) {
    Eigen::VectorXd x(1);
    x(0) = 0.5 * rng.normal();
    return x;
  };
  return generate(n_series, t_end, dt_obs, dt_fine, seed, 1, drift, inside, init, root);
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path);
  const int dim = data.series.empty() ? 0 : static_cast<int>(data.series.front().cols());
  out << "series,t";
  for (int j = 0; j < dim; ++j) out << ",y" << (j + 1);
  out << "\n";
  out.precision(17);
  for (std::size_t s = 0; s < data.series.size(); ++s) {
    const Eigen::MatrixXd& traj = data.series[s];
    for (Eigen::Index k = 0; k < traj.rows(); ++k) {
      out << s << "," << (static_cast<double>(k) * data.dt);
      for (Eigen::Index j = 0; j < traj.cols(); ++j) out << "," << traj(k, j);
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("save_dataset_csv: write failed for " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_number(const std::string& s, int line_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": not a number: '" + s +
                             "'");
  }
  if (pos != s.size()) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ": trailing characters in '" +
                             s + "'");
  }
  return v;
}

}  // namespace

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "series" || header[1] != "t") {
    throw std::runtime_error("csv line 1: expected header 'series,t,y1,...'");
  }
  const int dim = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < dim; ++j) {
    if (header[2 + j] != "y" + std::to_string(j + 1)) {
      throw std::runtime_error("csv line 1: expected column 'y" + std::to_string(j + 1) + "'");
    }
  }

  std::vector<std::vector<Eigen::VectorXd>> rows_per_series;
  std::vector<std::vector<double>> times_per_series;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != dim + 2) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                               std::to_string(dim + 2) + " fields, got " +
                               std::to_string(fields.size()));
    }
    const double sid_raw = parse_number(fields[0], line_no);
    const long sid = std::lround(sid_raw);
    if (sid < 0 || sid_raw != static_cast<double>(sid)) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": bad series id");
    }
    if (sid > static_cast<long>(rows_per_series.size())) {
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               ": series ids must be contiguous from 0");
    }
    if (sid == static_cast<long>(rows_per_series.size())) {
      rows_per_series.emplace_back();
      times_per_series.emplace_back();
    }
    times_per_series[sid].push_back(parse_number(fields[1], line_no));
    Eigen::VectorXd y(dim);
    for (int j = 0; j < dim; ++j) y(j) = parse_number(fields[2 + j], line_no);
    rows_per_series[sid].push_back(std::move(y));
  }
  if (rows_per_series.empty()) throw std::runtime_error("load_dataset_csv: no data rows");

  Dataset data;
  double dt = 0.0;
  for (std::size_t s = 0; s < rows_per_series.size(); ++s) {
    const auto& times = times_per_series[s];
    if (times.size() < 2) {
      throw std::runtime_error("load_dataset_csv: series " + std::to_string(s) +
                               " has fewer than two rows");
    }
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
      const double step = times[k + 1] - times[k];
      if (dt == 0.0) dt = step;
      if (!(step > 0.0) || std::fabs(step - dt) > 1e-9 * std::max(1.0, dt)) {
        throw std::runtime_error("load_dataset_csv: non-uniform time spacing in series " +
                                 std::to_string(s));
      }
    }
    Eigen::MatrixXd traj(rows_per_series[s].size(), dim);
    for (std::size_t k = 0; k < rows_per_series[s].size(); ++k) {
      traj.row(k) = rows_per_series[s][k].transpose();
    }
    data.series.push_back(std::move(traj));
  }
  data.dt = dt;
  return data;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
  return ((rows.rowwise() - mean.transpose()).array().rowwise() /
          scale.transpose().array())
      .matrix();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& rows) const {
  return (rows.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

Standardizer fit_standardizer(const std::vector<Eigen::MatrixXd>& series) {
  if (series.empty()) throw std::invalid_argument("fit_standardizer: no data");
  const int dim = static_cast<int>(series.front().cols());
  long total = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const auto& traj : series) {
    if (traj.cols() != dim) throw std::invalid_argument("fit_standardizer: mixed dimensions");
    sum += traj.colwise().sum().transpose();
    total += traj.rows();
  }
  if (total < 2) throw std::invalid_argument("fit_standardizer: need at least two rows");
  Standardizer st;
  st.mean = sum / static_cast<double>(total);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(dim);
  for (const auto& traj : series) {
    ss += (traj.rowwise() - st.mean.transpose())
              .array()
              .square()
              .colwise()
              .sum()
              .matrix()
              .transpose();
  }
  st.scale = (ss / static_cast<double>(total - 1)).array().sqrt();
  for (int j = 0; j < dim; ++j) {
    if (!(st.scale(j) > 1e-12)) {
      throw std::invalid_argument("fit_standardizer: dimension " + std::to_string(j + 1) +
                                  " has (near) zero variance");
    }
  }
  return st;
}

}  // namespace nsde
