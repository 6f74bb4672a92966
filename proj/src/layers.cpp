#include "nsde/layers.hpp"

namespace nsde {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Affine:
      return "affine";
    case LayerKind::Relu:
      return "relu";
    case LayerKind::Dropout:
      return "dropout";
    case LayerKind::Tanh:
      return "tanh";
  }
  throw std::logic_error("unreachable");
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "affine") return LayerKind::Affine;
  if (s == "relu") return LayerKind::Relu;
  if (s == "dropout") return LayerKind::Dropout;
  if (s == "tanh") return LayerKind::Tanh;
  throw std::invalid_argument("unknown layer kind: " + s);
}

void validate_network(const NetworkSpec& net) {
  if (net.input_dim <= 0 || net.output_dim <= 0) {
    throw std::invalid_argument("network: input_dim and output_dim must be positive");
  }
  if (net.layers.empty()) {
    throw std::invalid_argument("network: at least one layer required");
  }
  int dim = net.input_dim;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const std::string where = "network layer " + std::to_string(i) + ": ";
    switch (layer.kind) {
      case LayerKind::Affine:
        if (layer.weight.cols() != dim) {
          throw std::invalid_argument(where + "weight expects " + std::to_string(dim) +
                                      " inputs, has " + std::to_string(layer.weight.cols()));
        }
        if (layer.bias.rows() != layer.weight.rows() || layer.bias.cols() != 1) {
          throw std::invalid_argument(where + "bias shape mismatch");
        }
        dim = static_cast<int>(layer.weight.rows());
        break;
      case LayerKind::Dropout:
        if (!(layer.keep_prob > 0.0 && layer.keep_prob <= 1.0)) {
          throw std::invalid_argument(where + "keep probability must be in (0,1]");
        }
        break;
      case LayerKind::Relu:
      case LayerKind::Tanh:
        break;
    }
  }
  if (dim != net.output_dim) {
    throw std::invalid_argument("network: final dimension " + std::to_string(dim) +
                                " does not match output_dim " +
                                std::to_string(net.output_dim));
  }
}

Eigen::VectorXd layer_forward(const LayerSpec& layer, const Eigen::VectorXd& x,
                              const Eigen::VectorXd* dropout_mask) {
  switch (layer.kind) {
    case LayerKind::Affine:
      return layer.weight * x + layer.bias.col(0);
    case LayerKind::Relu:
      return x.cwiseMax(0.0);
    case LayerKind::Tanh:
      return x.array().tanh();
    case LayerKind::Dropout:
      if (dropout_mask == nullptr) return x;  // expectation of the scaled mask
      if (dropout_mask->size() != x.size()) {
        throw std::invalid_argument("layer_forward: dropout mask size mismatch");
      }
      return x.cwiseProduct(*dropout_mask) / layer.keep_prob;
  }
  throw std::logic_error("unreachable");
}

namespace {
GaussianT<Eigen::MatrixXd> pack(const GaussianState& g) {
  return {g.mean, g.cov};
}
GaussianState unpack(GaussianT<Eigen::MatrixXd> g) {
  return GaussianState(Eigen::VectorXd(g.mean.col(0)), std::move(g.cov));
}
}  // namespace

GaussianState affine_moments(const LayerSpec& layer, const GaussianState& in,
                             MomentDiagnostics* diag) {
  PlainCtx ctx{diag};
  return unpack(affine_moments<Eigen::MatrixXd>(layer, pack(in), ctx));
}

GaussianState relu_moments(const GaussianState& in, MomentDiagnostics* diag) {
  PlainCtx ctx{diag};
  return unpack(relu_moments<Eigen::MatrixXd>(pack(in), ctx));
}

GaussianState dropout_moments(double keep_prob, const GaussianState& in,
                              MomentDiagnostics* diag) {
  PlainCtx ctx{diag};
  return unpack(dropout_moments<Eigen::MatrixXd>(keep_prob, pack(in), ctx));
}

Eigen::MatrixXd layer_expected_jacobian(const LayerSpec& layer, const GaussianState& in) {
  PlainCtx ctx{nullptr};
  return layer_expected_jacobian<Eigen::MatrixXd>(layer, pack(in), ctx);
}

}  // namespace nsde
