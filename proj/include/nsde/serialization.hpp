#pragma once

#include "nsde/data_io.hpp"
#include "nsde/inference.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace nsde {

// Matrices are stored as row-major nested arrays. nlohmann emits doubles with
// shortest round-trip formatting, so save/load reproduces values bit-exactly.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);

/// {"input_dim": .., "output_dim": .., "layers": [{"kind": "affine",
/// "W": [[..]], "b": [..]} | {"kind": "relu"} | {"kind": "dropout",
/// "q": ..} | {"kind": "tanh"}]}
nlohmann::json network_to_json(const NetworkSpec& net);
NetworkSpec network_from_json(const nlohmann::json& j);

/// Checkpoint schema "nsde-checkpoint-v1": model dimensions, both networks,
/// the recognition parameters, observation noise, plus an arbitrary
/// configuration echo for provenance.
nlohmann::json checkpoint_to_json(const TrainableModel& tm, const nlohmann::json& config_echo);
TrainableModel checkpoint_from_json(const nlohmann::json& j,
                                    nlohmann::json* config_echo = nullptr);

void save_json(const nlohmann::json& j, const std::string& path);
nlohmann::json load_json(const std::string& path);

/// CSV "t,mean_1..mean_D,cov_11,cov_12,..." with the covariance upper
/// triangle in row-major order.
void save_gaussian_rollout_csv(const std::vector<GaussianState>& rollout, double dt,
                               const std::string& path);

/// CSV "t,particle,y_1..y_D", one row per particle per time point.
void save_particle_rollout_csv(const ParticleRollout& rollout, double dt,
                               const std::string& path);

}  // namespace nsde
