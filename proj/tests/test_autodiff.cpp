#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nsde/autodiff.hpp"

#include <cmath>

using namespace nsde;
using ad::Matrix;
using ad::Tape;
using ad::Value;

namespace {

Matrix random_matrix(int r, int c, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::srand(seed);
  Matrix m = Matrix::Random(r, c);
  return (m.array() * 0.5 * (hi - lo) + 0.5 * (hi + lo)).matrix();
}

double fd_check(const std::function<Value(Tape&, const std::vector<Value>&)>& f,
                std::vector<Matrix> params) {
  return ad::finite_difference_check(f, std::move(params), 1e-6);
}

}  // namespace

TEST_CASE("gradients of arithmetic primitives match finite differences") {
  Matrix a = random_matrix(3, 4, 11);
  Matrix b = random_matrix(3, 4, 12);
  Matrix c = random_matrix(4, 2, 13);

  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::sum(ad::cmul(ad::add(p[0], p[1]), ad::sub(p[0], p[1])));
        }, {a, b}) < 1e-6);
  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::sum(ad::matmul(p[0], p[1]));
        }, {a, c}) < 1e-6);
  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::sum(ad::cdiv(p[0], ad::sadd(ad::csquare(p[1]), 1.0)));
        }, {a, b}) < 1e-6);
  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::sum(ad::smul(ad::transpose(p[0]), 3.5));
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape& t, const std::vector<Value>& p) {
          return ad::bscale(ad::sum(p[0]), ad::trace(ad::matmul(p[0], p[1])));
        }, {a, c}) < 1e-6);
}

TEST_CASE("gradients of elementwise functions match finite differences") {
  Matrix a = random_matrix(2, 3, 21, 0.2, 1.5);  // positive, for log/sqrt
  Matrix b = random_matrix(2, 3, 22);

  auto check_unary = [&](Value (*op)(Value), const Matrix& x) {
    CHECK(fd_check([op](Tape&, const std::vector<Value>& p) { return ad::sum(op(p[0])); },
                   {x}) < 1e-5);
  };
  check_unary(ad::cexp, b);
  check_unary(ad::clog, a);
  check_unary(ad::csqrt, a);
  check_unary(ad::ctanh, b);
  check_unary(ad::csquare, b);
  check_unary(ad::softplus, b);
  check_unary(ad::norm_pdf, b);
  check_unary(ad::norm_cdf, b);
  check_unary(ad::neg, b);
}

TEST_CASE("clamp has zero subgradient in the clamped region") {
  Tape tape;
  Matrix x(1, 3);
  x << -2.0, 0.5, 3.0;
  Value v = tape.leaf(x);
  Value y = ad::sum(ad::clamp(v, 0.0, 1.0));
  tape.backward(y);
  Matrix g = tape.grad(v);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);
  CHECK(g(0, 2) == 0.0);
}

TEST_CASE("gradients of shape and reduction ops match finite differences") {
  Matrix a = random_matrix(4, 4, 31);
  Matrix v = random_matrix(4, 1, 32);

  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::sum(ad::cmul(ad::diag_mat(ad::diag_vec(p[0])), p[0]));
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::squared_norm(ad::block(p[0], 1, 1, 2, 3));
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape&, const std::vector<Value>& p) {
          return ad::dot(ad::concat_rows(p[1], p[1]),
                         ad::concat_rows(ad::diag_vec(p[0]), p[1]));
        }, {a, v}) < 1e-6);
}

TEST_CASE("cholesky adjoint matches finite differences on an spd input") {
  Matrix g = random_matrix(3, 3, 41);
  Matrix spd = g * g.transpose() + 3.0 * Matrix::Identity(3, 3);
  // A wider step than the default keeps roundoff well below the comparison
  // floor at coordinates whose true gradient is zero.
  CHECK(ad::finite_difference_check([](Tape&, const std::vector<Value>& p) {
          // weight the factor entries asymmetrically so the test is not
          // fooled by symmetric-only correctness
          Value l = ad::cholesky(p[0]);
          Value w = ad::sum(ad::cmul(l, l));
          return ad::add(w, ad::smul(ad::sum(ad::block(l, 1, 0, 2, 1)), 0.7));
        }, {spd}, 1e-4) < 1e-5);
}

TEST_CASE("gradient is linear in the upstream adjoint") {
  // d(alpha f)/dx == alpha df/dx
  Matrix a = random_matrix(3, 3, 51);
  Matrix g1, g2;
  {
    Tape tape;
    Value x = tape.leaf(a);
    tape.backward(ad::sum(ad::cexp(x)));
    g1 = tape.grad(x);
  }
  {
    Tape tape;
    Value x = tape.leaf(a);
    tape.backward(ad::smul(ad::sum(ad::cexp(x)), 2.5));
    g2 = tape.grad(x);
  }
  CHECK((g2 - 2.5 * g1).norm() < 1e-12);
}

TEST_CASE("constants receive no gradient but contribute to values") {
  Tape tape;
  Matrix a(1, 1), b(1, 1);
  a << 2.0;
  b << 5.0;
  Value x = tape.leaf(a);
  Value k = tape.constant(b);
  Value y = ad::sum(ad::cmul(x, k));
  CHECK(y.val()(0, 0) == doctest::Approx(10.0));
  tape.backward(y);
  CHECK(tape.grad(x)(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("backward reports non-finite adjoints with the node name") {
  Tape tape;
  Matrix a(1, 1);
  a << 0.0;
  Value x = tape.leaf(a);
  Value y = ad::csqrt(x);  // derivative 1/(2 sqrt(0)) is infinite
  CHECK_THROWS_WITH_AS(tape.backward(ad::sum(y)),
                       doctest::Contains("non-finite adjoint"), std::runtime_error);
}

TEST_CASE("mixing tapes is rejected") {
  Tape t1, t2;
  Value a = t1.leaf(Matrix::Ones(1, 1));
  Value b = t2.leaf(Matrix::Ones(1, 1));
  CHECK_THROWS_AS(ad::add(a, b), std::logic_error);
}
