// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <slspec/matrix.hpp>

using namespace slspec;
using Catch::Approx;

namespace {

cmatrix cmat(int r, int c, std::initializer_list<complex> vals) {
  cmatrix m(r, c);
  int k = 0;
  for (complex v : vals) m(k / c, k % c) = v, ++k;
  return m;
}

// independent oracle: plain Taylor series after halving until the norm is
// small, then repeated squaring
cmatrix expm_series_oracle(cmatrix m) {
  int halvings = 0;
  while (max_abs(m) > 0.25) {
    m /= 2.0;
    ++halvings;
  }
  const Eigen::Index n = m.rows();
  cmatrix term = cmatrix::Identity(n, n), sum = cmatrix::Identity(n, n);
  for (int j = 1; j <= 40; ++j) {
    term = (term * m / static_cast<double>(j)).eval();
    sum += term;
  }
  for (int k = 0; k < halvings; ++k) sum = (sum * sum).eval();
  return sum;
}

std::mt19937_64 rng(20240811u);

cmatrix random_matrix(int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  cmatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = scale * complex(g(rng), g(rng));
  return m;
}

cmatrix random_hermitian(int n) {
  const cmatrix m = random_matrix(n);
  return (m + m.adjoint()) / 2.0;
}

cmatrix random_invertible(int n) {
  for (;;) {
    cmatrix m = random_matrix(n);
    if (rank_tol(m) == n && std::abs(m.partialPivLu().determinant()) > 1e-3) return m;
  }
}

}  // namespace

TEST_CASE("hermitian inertia on diagonal and simple cases") {
  cmatrix d = cmat(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, -1});
  CHECK(hermitian_inertia(d, 1e-9) == inertia{1, 1, 1});

  cmatrix offdiag = cmat(2, 2, {0, 1, 1, 0});  // eigenvalues +-1
  CHECK(hermitian_inertia(offdiag, 1e-9) == inertia{0, 1, 1});

  cmatrix proj = cmat(2, 2, {1, 0, 0, 0});
  CHECK(hermitian_inertia(proj, 1e-9) == inertia{1, 1, 0});
}

TEST_CASE("hermitian inertia rejects bad input") {
  CHECK_THROWS_AS(hermitian_inertia(cmat(2, 2, {0, 1, 0, 0}), 1e-9), not_hermitian_error);
  CHECK_THROWS_AS(hermitian_inertia(cmatrix::Zero(2, 3), 1e-9), non_square_error);
}

TEST_CASE("inertia components always sum to the dimension") {
  for (int n : {1, 2, 4, 6}) {
    const cmatrix m = random_hermitian(n);
    CHECK(hermitian_inertia(m, default_inertia_tol(m)).dim() == n);
  }
}

TEST_CASE("inertia is congruence invariant (Sylvester)") {
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(trial % 3);
    const cmatrix m = random_hermitian(n);
    const cmatrix r = random_invertible(n);
    const cmatrix congruent = r.adjoint() * m * r;
    CHECK(hermitian_inertia(m, 1e-9) == hermitian_inertia(congruent, default_inertia_tol(congruent)));
  }
}

TEST_CASE("rank with tolerance") {
  CHECK(rank_tol(cmatrix::Identity(4, 4), 1e-10) == 4);
  CHECK(rank_tol(cmatrix::Zero(2, 3), 1e-10) == 0);
  CHECK(rank_tol(cmat(2, 2, {1, 1, 1, 1}), 1e-10) == 1);
}

TEST_CASE("null space basics") {
  CHECK(null_space(cmatrix::Identity(3, 3)).cols() == 0);

  const cmatrix z = null_space(cmatrix::Zero(2, 2));
  REQUIRE(z.cols() == 2);
  CHECK(max_abs(z.adjoint() * z - cmatrix::Identity(2, 2)) < 1e-14);

  const cmatrix k = null_space(cmat(2, 2, {1, -1, 0, 0}));
  REQUIRE(k.cols() == 1);
  cvector expect(2);
  expect << complex(1, 0), complex(1, 0);
  expect /= std::sqrt(2.0);
  // same span: unit inner product in modulus
  CHECK(std::abs((expect.adjoint() * k.col(0))(0, 0)) == Approx(1.0).margin(1e-12));
}

TEST_CASE("rank-nullity") {
  for (int trial = 0; trial < 10; ++trial) {
    const int rows = 2 + trial % 3, cols = 2 + (trial / 2) % 4;
    cmatrix m(rows, cols);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = complex(g(rng), g(rng));
    if (trial % 3 == 0 && cols > 1) m.col(cols - 1) = m.col(0);  // force a kernel vector
    CHECK(rank_tol(m) + null_space(m).cols() == cols);
  }
}

TEST_CASE("determinant basics") {
  CHECK(determinant(cmatrix::Identity(5, 5)).real() == Approx(1.0));
  CHECK(determinant(cmat(2, 2, {-1, 0, 1, 1})).real() == Approx(-1.0));
  CHECK(std::abs(determinant(cmat(2, 2, {0, 1, 0, 1}))) < 1e-15);
  CHECK_THROWS_AS(determinant(cmatrix::Zero(2, 3)), non_square_error);
}

TEST_CASE("determinant is multiplicative") {
  for (int trial = 0; trial < 10; ++trial) {
    const cmatrix a = random_invertible(4), b = random_invertible(4);
    const complex lhs = determinant(a * b);
    const complex rhs = determinant(a) * determinant(b);
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(rhs));
  }
}

TEST_CASE("matrix exponential basics") {
  CHECK(max_abs(matrix_exp(cmatrix::Zero(2, 2)) - cmatrix::Identity(2, 2)) < 1e-15);

  cmatrix d = cmat(2, 2, {std::log(2.0), 0, 0, 0});
  const cmatrix ed = matrix_exp(d);
  CHECK(ed(0, 0).real() == Approx(2.0).epsilon(1e-13));
  CHECK(ed(1, 1).real() == Approx(1.0).epsilon(1e-13));

  CHECK_THROWS_AS(matrix_exp(cmatrix::Zero(2, 3)), non_square_error);
}

TEST_CASE("rotation generator against the series oracle") {
  const double w2 = M_PI * M_PI;
  const cmatrix m = cmat(2, 2, {0, 1, -w2, 0});
  const cmatrix e = matrix_exp(m);
  // closed form: [[cos pi, sin pi / pi], [-pi sin pi, cos pi]]
  CHECK(e(0, 0).real() == Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(e(0, 1)) < 1e-12);
  CHECK(std::abs(e(1, 0)) < 1e-11);
  CHECK(e(1, 1).real() == Approx(-1.0).epsilon(1e-12));
  CHECK(max_abs(e - expm_series_oracle(m)) < 1e-11);
}

TEST_CASE("matrix exponential inverse identity") {
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 3;
    cmatrix m = random_matrix(n);
    m *= 5.0 / std::max(1.0, max_abs(m) * n);  // keep ||M|| <= 5
    const cmatrix prod = matrix_exp(m) * matrix_exp(-m);
    CHECK(max_abs(prod - cmatrix::Identity(n, n)) < 1e-10);
  }
}

TEST_CASE("scaled exponential handles enormous norms") {
  // exp([[0,1],[tau^2,0]]) = [[cosh tau, sinh tau / tau],[tau sinh tau, cosh tau]]
  const double tau = 3000.0;
  const cmatrix m = cmat(2, 2, {0, 1, tau * tau, 0});
  const scaled_matrix e = matrix_exp_scaled(m);
  // log of the largest entry: log(tau sinh tau) ~ tau + log(tau/2)
  const double expected = tau + std::log(tau / 2.0);
  CHECK(e.log_scale + std::log(max_abs(e.m)) == Approx(expected).epsilon(1e-9));
  // entry ratios survive the scaling
  const double ratio = std::abs(e.m(1, 0)) / std::abs(e.m(0, 0));
  CHECK(ratio == Approx(tau).epsilon(1e-9));
}

TEST_CASE("scaled complex arithmetic") {
  const scaled_complex a{complex(1.0, 0.0), 500.0};
  const scaled_complex b{complex(-1.0, 0.0), 500.0};
  CHECK((a + b).is_zero());
  const scaled_complex c = a * a;
  CHECK(c.log_abs() == Approx(1000.0));
  const scaled_complex d = a / c;
  CHECK(d.log_abs() == Approx(-500.0));
}

TEST_CASE("det_scaled matches determinant in the representable range") {
  for (int trial = 0; trial < 8; ++trial) {
    const cmatrix m = random_matrix(4);
    const scaled_complex d = det_scaled(m);
    const complex plain = determinant(m);
    CHECK(std::abs(d.value() - plain) < 1e-10 * std::max(1.0, std::abs(plain)));
  }
}
