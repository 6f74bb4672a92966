#include "nsde/serialization.hpp"

#include <fstream>

namespace nsde {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw std::runtime_error(what + ": expected a non-empty array of arrays");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::runtime_error(what + ": ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw std::runtime_error(what + ": non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

namespace {

Eigen::MatrixXd column_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw std::runtime_error(what + ": expected an array");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), 1);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::runtime_error(what + ": non-numeric entry");
    m(static_cast<Eigen::Index>(i), 0) = j[i].get<double>();
  }
  return m;
}

json column_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m(i, 0));
  return out;
}

}  // namespace

json network_to_json(const NetworkSpec& net) {
  json layers = json::array();
  for (const LayerSpec& layer : net.layers) {
    json l;
    l["kind"] = to_string(layer.kind);
    if (layer.kind == LayerKind::Affine) {
      l["W"] = matrix_to_json(layer.weight);
      l["b"] = column_to_json(layer.bias);
    } else if (layer.kind == LayerKind::Dropout) {
      l["q"] = layer.keep_prob;
    }
    layers.push_back(std::move(l));
  }
  return json{{"input_dim", net.input_dim},
              {"output_dim", net.output_dim},
              {"layers", std::move(layers)}};
}

NetworkSpec network_from_json(const json& j) {
  NetworkSpec net;
  net.input_dim = j.at("input_dim").get<int>();
  net.output_dim = j.at("output_dim").get<int>();
  for (const json& l : j.at("layers")) {
    LayerSpec layer;
    layer.kind = layer_kind_from_string(l.at("kind").get<std::string>());
    if (layer.kind == LayerKind::Affine) {
      layer.weight = matrix_from_json(l.at("W"), "network W");
      layer.bias = column_from_json(l.at("b"), "network b");
    } else if (layer.kind == LayerKind::Dropout) {
      layer.keep_prob = l.at("q").get<double>();
    }
    net.layers.push_back(std::move(layer));
  }
  validate_network(net);
  return net;
}

json checkpoint_to_json(const TrainableModel& tm, const json& config_echo) {
  json j;
  j["schema"] = "nsde-checkpoint-v1";
  j["latent_dim"] = tm.model.latent_dim;
  j["control_dim"] = tm.model.control_dim;
  j["drift"] = network_to_json(tm.model.drift);
  if (tm.model.diffusion.has_value()) j["diffusion"] = network_to_json(*tm.model.diffusion);
  j["rho"] = column_to_json(tm.rho);
  j["log_c"] = tm.log_c;
  j["train_c"] = tm.train_c;
  j["config"] = config_echo;
  return j;
}

TrainableModel checkpoint_from_json(const json& j, json* config_echo) {
  if (j.at("schema").get<std::string>() != "nsde-checkpoint-v1") {
    throw std::runtime_error("checkpoint: unsupported schema");
  }
  TrainableModel tm;
  tm.model.latent_dim = j.at("latent_dim").get<int>();
  tm.model.control_dim = j.at("control_dim").get<int>();
  tm.model.drift = network_from_json(j.at("drift"));
  if (j.contains("diffusion")) tm.model.diffusion = network_from_json(j.at("diffusion"));
  tm.rho = column_from_json(j.at("rho"), "checkpoint rho").col(0);
  tm.log_c = j.at("log_c").get<double>();
  tm.train_c = j.at("train_c").get<bool>();
  validate_model(tm.model);
  if (tm.rho.size() != tm.model.latent_dim) {
    throw std::runtime_error("checkpoint: rho length does not match latent_dim");
  }
  if (config_echo != nullptr) *config_echo = j.value("config", json::object());
  return tm;
}

void save_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_json: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("save_json: write failed for " + path);
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_json: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("load_json: " + path + ": " + e.what());
  }
  return j;
}

void save_gaussian_rollout_csv(const std::vector<GaussianState>& rollout, double dt,
                               const std::string& path) {
  if (rollout.empty()) throw std::invalid_argument("save_gaussian_rollout_csv: empty rollout");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_gaussian_rollout_csv: cannot open " + path);
  const int d = static_cast<int>(rollout.front().dim());
  out << "t";
  for (int i = 0; i < d; ++i) out << ",mean_" << (i + 1);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) out << ",cov_" << (i + 1) << (j + 1);
  }
  out << "\n";
  out.precision(17);
  for (std::size_t k = 0; k < rollout.size(); ++k) {
    out << (static_cast<double>(k) * dt);
    for (int i = 0; i < d; ++i) out << "," << rollout[k].mean(i);
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) out << "," << rollout[k].cov(i, j);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_gaussian_rollout_csv: write failed for " + path);
}

void save_particle_rollout_csv(const ParticleRollout& rollout, double dt,
                               const std::string& path) {
  if (rollout.states.empty()) {
    throw std::invalid_argument("save_particle_rollout_csv: empty rollout");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_particle_rollout_csv: cannot open " + path);
  const int d = static_cast<int>(rollout.states.front().cols());
  out << "t,particle";
  for (int i = 0; i < d; ++i) out << ",y_" << (i + 1);
  out << "\n";
  out.precision(17);
  for (std::size_t k = 0; k < rollout.states.size(); ++k) {
    const Eigen::MatrixXd& snap = rollout.states[k];
    for (Eigen::Index p = 0; p < snap.rows(); ++p) {
      out << (static_cast<double>(k) * dt) << "," << p;
      for (int i = 0; i < d; ++i) out << "," << snap(p, i);
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("save_particle_rollout_csv: write failed for " + path);
}

}  // namespace nsde
