#include "nsde/network.hpp"

namespace nsde {

GaussianState vmm_forward(const NetworkSpec& net, const GaussianState& in,
                          MomentDiagnostics* diag) {
  PlainCtx ctx{diag};
  GaussianT<Eigen::MatrixXd> state{in.mean, in.cov};
  VmmResult<Eigen::MatrixXd> r = vmm_forward(net, std::move(state), ctx, false);
  return GaussianState(Eigen::VectorXd(r.out.mean.col(0)), std::move(r.out.cov));
}

Eigen::VectorXd network_forward(const NetworkSpec& net, const Eigen::VectorXd& x) {
  Eigen::VectorXd v = x;
  for (const LayerSpec& layer : net.layers) {
    v = layer_forward(layer, v);
  }
  return v;
}

}  // namespace nsde
