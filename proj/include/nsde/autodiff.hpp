#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace nsde::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Value {
  Tape* tape = nullptr;
  int idx = -1;

  const Matrix& val() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
};

/// Append-only record of matrix operations, replayed in reverse for gradients.
/// One tape per evaluation; not shared across threads.
class Tape {
 public:
  /// Leaf whose adjoint is retained (a trainable parameter).
  Value leaf(Matrix v);

  /// Leaf treated as a constant; no adjoint is propagated into it.
  Value constant(Matrix v);
  Value constant(double s);

  /// Reverse pass from a scalar (1x1) root. Throws on non-finite adjoints,
  /// reporting the offending node index and operation name.
  void backward(const Value& root);

  /// Adjoint of a node after backward(). Zero-sized before backward.
  const Matrix& grad(const Value& v) const;

  std::size_t size() const { return nodes_.size(); }

  // --- internals used by the operator implementations ---
  Value make(Matrix v, const char* name, std::function<void(Tape&)> back);
  const Matrix& val(int idx) const { return nodes_[idx].val; }
  Matrix& adj(int idx) { return nodes_[idx].adj; }

 private:
  struct Node {
    Matrix val;
    Matrix adj;
    std::function<void(Tape&)> back;
    const char* name;
  };
  std::deque<Node> nodes_;
};

// Arithmetic. cmul/cdiv are elementwise; matmul is the matrix product.
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value neg(Value a);
Value cmul(Value a, Value b);
Value cdiv(Value a, Value b);
Value matmul(Value a, Value b);
Value transpose(Value a);
Value smul(Value a, double s);
Value sadd(Value a, double s);

/// Broadcast multiply by a 1x1 scalar value.
Value bscale(Value a, Value s);

// Elementwise functions.
Value cexp(Value a);
Value clog(Value a);
Value csqrt(Value a);
Value casin(Value a);
Value ctanh(Value a);
Value csquare(Value a);
Value softplus(Value a);
Value norm_pdf(Value a);
Value norm_cdf(Value a);

/// max(a, m) elementwise; subgradient 0 where clamped.
Value clamp_min(Value a, double m);
Value clamp(Value a, double lo, double hi);
Value relu(Value a);

// Reductions and shape ops.
Value sum(Value a);
Value trace(Value a);
Value diag_vec(Value a);
Value diag_mat(Value v);
Value block(Value a, int i0, int j0, int r, int c);
Value concat_rows(Value a, Value b);
Value squared_norm(Value a);
Value dot(Value a, Value b);

/// Lower Cholesky factor; input must be symmetric positive definite.
Value cholesky(Value a);

/// Central-difference check of a scalar-valued taped function against its
/// reverse-mode gradient. Returns the max relative deviation over all
/// coordinates of all parameters. `f` must rebuild the computation from the
/// given leaves each call.
double finite_difference_check(
    const std::function<Value(Tape&, const std::vector<Value>&)>& f,
    std::vector<Matrix> params, double step);

}  // namespace nsde::ad
