#include "nsde/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace nsde::ad {

const Matrix& Value::val() const { return tape->val(idx); }
Eigen::Index Value::rows() const { return val().rows(); }
Eigen::Index Value::cols() const { return val().cols(); }

Value Tape::make(Matrix v, const char* name, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(v), Matrix(), std::move(back), name});
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(Matrix v) { return make(std::move(v), "leaf", nullptr); }

Value Tape::constant(Matrix v) { return make(std::move(v), "const", nullptr); }

Value Tape::constant(double s) {
  Matrix m(1, 1);
  m(0, 0) = s;
  return constant(std::move(m));
}

void Tape::backward(const Value& root) {
  if (root.tape != this) throw std::logic_error("backward: value from another tape");
  if (root.rows() != 1 || root.cols() != 1) throw std::logic_error("backward: root must be scalar");
  for (auto& n : nodes_) n.adj = Matrix::Zero(n.val.rows(), n.val.cols());
  nodes_[root.idx].adj(0, 0) = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (!nodes_[i].adj.allFinite()) {
      throw std::runtime_error("autodiff: non-finite adjoint at node " + std::to_string(i) +
                               " (" + nodes_[i].name + ")");
    }
    if (nodes_[i].back) nodes_[i].back(*this);
  }
}

const Matrix& Tape::grad(const Value& v) const { return nodes_[v.idx].adj; }

namespace {

Tape* same_tape(Value a, Value b) {
  if (a.tape != b.tape) throw std::logic_error("autodiff: mixed tapes");
  return a.tape;
}

void check_shape(Value a, Value b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op);
  }
}

}  // namespace

Value add(Value a, Value b) {
  Tape* tp = same_tape(a, b);
  check_shape(a, b, "add");
  int ai = a.idx, bi = b.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val() + b.val(), "add", [ai, bi, oi](Tape& t) {
    t.adj(ai) += t.adj(oi);
    t.adj(bi) += t.adj(oi);
  });
}

Value sub(Value a, Value b) {
  Tape* tp = same_tape(a, b);
  check_shape(a, b, "sub");
  int ai = a.idx, bi = b.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val() - b.val(), "sub", [ai, bi, oi](Tape& t) {
    t.adj(ai) += t.adj(oi);
    t.adj(bi) -= t.adj(oi);
  });
}

Value neg(Value a) { return smul(a, -1.0); }

Value cmul(Value a, Value b) {
  Tape* tp = same_tape(a, b);
  check_shape(a, b, "cmul");
  int ai = a.idx, bi = b.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().cwiseProduct(b.val()), "cmul", [ai, bi, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).cwiseProduct(t.val(bi));
    t.adj(bi) += t.adj(oi).cwiseProduct(t.val(ai));
  });
}

Value cdiv(Value a, Value b) {
  Tape* tp = same_tape(a, b);
  check_shape(a, b, "cdiv");
  int ai = a.idx, bi = b.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().cwiseQuotient(b.val()), "cdiv", [ai, bi, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).cwiseQuotient(t.val(bi));
    t.adj(bi) -= t.adj(oi).cwiseProduct(t.val(oi)).cwiseQuotient(t.val(bi));
  });
}

Value matmul(Value a, Value b) {
  Tape* tp = same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("autodiff: shape mismatch in matmul");
  int ai = a.idx, bi = b.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val() * b.val(), "matmul", [ai, bi, oi](Tape& t) {
    t.adj(ai) += t.adj(oi) * t.val(bi).transpose();
    t.adj(bi) += t.val(ai).transpose() * t.adj(oi);
  });
}

Value transpose(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().transpose(), "transpose", [ai, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).transpose();
  });
}

Value smul(Value a, double s) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val() * s, "smul", [ai, oi, s](Tape& t) { t.adj(ai) += s * t.adj(oi); });
}

Value sadd(Value a, double s) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make((a.val().array() + s).matrix(), "sadd", [ai, oi](Tape& t) { t.adj(ai) += t.adj(oi); });
}

Value bscale(Value a, Value s) {
  Tape* tp = same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("bscale: scalar must be 1x1");
  int ai = a.idx, si = s.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val() * s.val()(0, 0), "bscale", [ai, si, oi](Tape& t) {
    t.adj(ai) += t.val(si)(0, 0) * t.adj(oi);
    t.adj(si)(0, 0) += t.val(ai).cwiseProduct(t.adj(oi)).sum();
  });
}

namespace {

template <class F, class DF>
Value cwise(Value a, const char* name, F f, DF df) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  Matrix v = a.val().unaryExpr(f);
  return tp->make(std::move(v), name, [ai, oi, df](Tape& t) {
    t.adj(ai) += t.adj(oi).cwiseProduct(t.val(ai).unaryExpr(df));
  });
}

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kInvSqrt2 = 0.7071067811865475244008444;

double pdf1(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double cdf1(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

}  // namespace

Value cexp(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().array().exp().matrix(), "exp", [ai, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).cwiseProduct(t.val(oi));
  });
}

Value clog(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().array().log().matrix(), "log", [ai, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).cwiseQuotient(t.val(ai));
  });
}

Value csqrt(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().array().sqrt().matrix(), "sqrt", [ai, oi](Tape& t) {
    t.adj(ai) += 0.5 * t.adj(oi).cwiseQuotient(t.val(oi));
  });
}

Value casin(Value a) {
  return cwise(a, "asin", [](double x) { return std::asin(x); },
               [](double x) { return 1.0 / std::sqrt(1.0 - x * x); });
}

Value ctanh(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().array().tanh().matrix(), "tanh", [ai, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).cwiseProduct(
        (1.0 - t.val(oi).array().square()).matrix());
  });
}

Value csquare(Value a) {
  return cwise(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Value softplus(Value a) {
  return cwise(a, "softplus",
               [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
               [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Value norm_pdf(Value a) {
  return cwise(a, "norm_pdf", [](double x) { return pdf1(x); },
               [](double x) { return -x * pdf1(x); });
}

Value norm_cdf(Value a) {
  return cwise(a, "norm_cdf", [](double x) { return cdf1(x); },
               [](double x) { return pdf1(x); });
}

Value clamp_min(Value a, double m) {
  return cwise(a, "clamp_min", [m](double x) { return x < m ? m : x; },
               [m](double x) { return x > m ? 1.0 : 0.0; });
}

Value clamp(Value a, double lo, double hi) {
  return cwise(a, "clamp",
               [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
               [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Value relu(Value a) { return clamp_min(a, 0.0); }

Value sum(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  Matrix v(1, 1);
  v(0, 0) = a.val().sum();
  return tp->make(std::move(v), "sum", [ai, oi](Tape& t) {
    t.adj(ai).array() += t.adj(oi)(0, 0);
  });
}

Value trace(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  Matrix v(1, 1);
  v(0, 0) = a.val().trace();
  return tp->make(std::move(v), "trace", [ai, oi](Tape& t) {
    t.adj(ai).diagonal().array() += t.adj(oi)(0, 0);
  });
}

Value diag_vec(Value a) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().diagonal(), "diag_vec", [ai, oi](Tape& t) {
    t.adj(ai).diagonal() += t.adj(oi);
  });
}

Value diag_mat(Value v) {
  Tape* tp = v.tape;
  if (v.cols() != 1) throw std::invalid_argument("diag_mat: column vector required");
  int ai = v.idx;
  int oi = static_cast<int>(tp->size());
  Matrix m = Matrix(v.val().col(0).asDiagonal());
  return tp->make(std::move(m), "diag_mat", [ai, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).diagonal();
  });
}

Value block(Value a, int i0, int j0, int r, int c) {
  Tape* tp = a.tape;
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  return tp->make(a.val().block(i0, j0, r, c), "block", [ai, oi, i0, j0, r, c](Tape& t) {
    t.adj(ai).block(i0, j0, r, c) += t.adj(oi);
  });
}

Value concat_rows(Value a, Value b) {
  Tape* tp = same_tape(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: column mismatch");
  int ai = a.idx, bi = b.idx;
  int ar = static_cast<int>(a.rows()), br = static_cast<int>(b.rows());
  int oi = static_cast<int>(tp->size());
  Matrix v(ar + br, a.cols());
  v.topRows(ar) = a.val();
  v.bottomRows(br) = b.val();
  return tp->make(std::move(v), "concat_rows", [ai, bi, ar, br, oi](Tape& t) {
    t.adj(ai) += t.adj(oi).topRows(ar);
    t.adj(bi) += t.adj(oi).bottomRows(br);
  });
}

Value squared_norm(Value a) { return sum(csquare(a)); }

Value dot(Value a, Value b) { return sum(cmul(a, b)); }

Value cholesky(Value a) {
  Tape* tp = a.tape;
  if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: square matrix required");
  int ai = a.idx;
  int oi = static_cast<int>(tp->size());
  Matrix sym = 0.5 * (a.val() + a.val().transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) throw std::runtime_error("cholesky: factorization failed");
  Matrix L = llt.matrixL();
  return tp->make(std::move(L), "cholesky", [ai, oi](Tape& t) {
    const Matrix& L = t.val(oi);
    Matrix gl = t.adj(oi).triangularView<Eigen::Lower>();
    Matrix P = L.transpose() * gl;
    Matrix phi = P.triangularView<Eigen::StrictlyLower>();
    phi += 0.5 * Matrix(P.diagonal().asDiagonal());
    // S = L^{-T} phi L^{-1}
    Matrix Y = L.transpose().triangularView<Eigen::Upper>().solve(phi);
    Matrix S = L.transpose().triangularView<Eigen::Upper>().solve(Y.transpose()).transpose();
    t.adj(ai) += 0.5 * (S + S.transpose());
  });
}

double finite_difference_check(
    const std::function<Value(Tape&, const std::vector<Value>&)>& f,
    std::vector<Matrix> params, double step) {
  // Reference gradient from one reverse pass.
  std::vector<Matrix> grads;
  {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    Value y = f(tape, leaves);
    tape.backward(y);
    for (const auto& l : leaves) grads.push_back(tape.grad(l));
  }
  auto eval = [&](const std::vector<Matrix>& ps) {
    Tape tape;
    std::vector<Value> leaves;
    for (const auto& p : ps) leaves.push_back(tape.leaf(p));
    return f(tape, leaves).val()(0, 0);
  };
  double max_rel = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < params[k].cols(); ++j) {
        std::vector<Matrix> ps = params;
        ps[k](i, j) += step;
        double up = eval(ps);
        ps[k](i, j) -= 2.0 * step;
        double dn = eval(ps);
        double fd = (up - dn) / (2.0 * step);
        double g = grads[k](i, j);
        double denom = std::max({std::fabs(fd), std::fabs(g), 1e-6});
        max_rel = std::max(max_rel, std::fabs(fd - g) / denom);
      }
    }
  }
  return max_rel;
}

}  // namespace nsde::ad
