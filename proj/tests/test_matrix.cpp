#include <random>

#include "dcft/errors.hpp"
#include "dcft/matrix.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dcft;
using namespace dcft::test;

TEST_CASE("matmul identity and hand arithmetic") {
  std::mt19937_64 rng(7);
  Matrix x = random_matrix(2, 5, rng);
  Matrix id = Matrix::identity(2);
  CHECK(max_abs_diff(matmul(id, x), x) == 0.0);

  Matrix a = Matrix::from_rows({{1, 2}});
  Matrix b = Matrix::from_rows({{3}, {4}});
  Matrix p = matmul(a, b);
  CHECK(p.rows() == 1);
  CHECK(p.cols() == 1);
  CHECK(p.at(0, 0) == 11.0);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  Matrix a(3, 2);
  Matrix b(4, 5);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3x2") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("conv2d_valid full-window sum and identity kernel") {
  Matrix x = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix ones(2, 2, 1.0);
  Matrix y = conv2d_valid(x, ones, 2);
  CHECK(y.rows() == 1);
  CHECK(y.cols() == 1);
  CHECK(y.at(0, 0) == 10.0);

  std::mt19937_64 rng(3);
  Matrix z = random_matrix(5, 4, rng);
  Matrix unit = Matrix::from_rows({{1}});
  CHECK(max_abs_diff(conv2d_valid(z, unit, 1), z) == 0.0);
}

TEST_CASE("conv2d_valid equals brute force on random input") {
  std::mt19937_64 rng(11);
  Matrix x = random_matrix(4, 4, rng);
  Matrix k = random_matrix(2, 2, rng);
  CHECK(max_abs_diff(conv2d_valid(x, k, 2), brute_force_conv(x, k, 2)) < 1e-14);
  Matrix x2 = random_matrix(7, 9, rng);
  Matrix k2 = random_matrix(3, 3, rng);
  CHECK(max_abs_diff(conv2d_valid(x2, k2, 2), brute_force_conv(x2, k2, 2)) < 1e-14);
}

TEST_CASE("conv2d_valid rejects non-integral output dims") {
  Matrix x(5, 5);
  Matrix k(2, 2);
  CHECK_THROWS_AS(conv2d_valid(x, k, 2), ShapeError);  // (5-2) % 2 != 0
  CHECK_THROWS_AS(conv2d_valid(Matrix(1, 1), k, 1), ShapeError);
}

TEST_CASE("deconv2d single-block copy") {
  std::mt19937_64 rng(5);
  Matrix f = Matrix::from_rows({{1}});
  Matrix c = random_matrix(3, 3, rng);
  CHECK(max_abs_diff(deconv2d(f, c, 3), c) == 0.0);
}

TEST_CASE("deconv2d equals Kronecker product when stride equals kernel dim") {
  std::mt19937_64 rng(13);
  Matrix f = random_matrix(2, 2, rng);
  Matrix c = random_matrix(2, 2, rng);
  CHECK(max_abs_diff(deconv2d(f, c, 2), brute_force_kron(f, c)) < 1e-12);
}

TEST_CASE("deconv2d overlapping stride matches hand scatter") {
  Matrix f(2, 2, 1.0);
  Matrix c(2, 2, 1.0);
  Matrix expected = Matrix::from_rows({{1, 2, 1}, {2, 4, 2}, {1, 2, 1}});
  CHECK(max_abs_diff(deconv2d(f, c, 1), expected) == 0.0);
}

TEST_CASE("deconv2d stride outside [1,d] is a configuration error") {
  Matrix f(2, 2);
  Matrix c(2, 2);
  CHECK_THROWS_AS(deconv2d(f, c, 3), ConfigError);
  CHECK_THROWS_AS(deconv2d(f, c, 0), ConfigError);
}

TEST_CASE("frobenius_norm_sq basics") {
  CHECK(frobenius_norm_sq(Matrix(3, 3)) == 0.0);
  CHECK(frobenius_norm_sq(Matrix::from_rows({{3, 4}})) == 25.0);
}

TEST_CASE("kron basics and cross-check against deconv2d") {
  std::mt19937_64 rng(17);
  Matrix c = random_matrix(2, 2, rng);
  CHECK(max_abs_diff(kron(Matrix::from_rows({{1}}), c), c) == 0.0);

  Matrix f = Matrix::from_rows({{2, 0}, {0, 2}});
  Matrix one = Matrix::from_rows({{1}});
  CHECK(max_abs_diff(kron(f, one), f) == 0.0);

  Matrix f2 = random_matrix(2, 3, rng);
  Matrix c2 = random_matrix(2, 2, rng);
  CHECK(max_abs_diff(kron(f2, c2), deconv2d(f2, c2, 2)) < 1e-12);
}

TEST_CASE("property: conv/deconv adjoint duality") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng);
    const int s = std::uniform_int_distribution<int>(1, d)(rng);
    const int p = dim(rng);
    const int q = dim(rng);
    Matrix f = random_matrix(p, q, rng);
    Matrix c = random_matrix(d, d, rng);
    Matrix delta = deconv2d(f, c, s);
    Matrix x = random_matrix(delta.rows(), delta.cols(), rng);
    const double lhs = dot(delta, x);
    const double rhs = dot(f, conv2d_valid(x, c, s));
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("property: deconv2d is linear in F") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = std::uniform_int_distribution<int>(1, 4)(rng);
    const int s = std::uniform_int_distribution<int>(1, d)(rng);
    Matrix f1 = random_matrix(3, 2, rng);
    Matrix f2 = random_matrix(3, 2, rng);
    Matrix c = random_matrix(d, d, rng);
    const double alpha = 0.7, beta = -1.3;
    Matrix lhs = deconv2d(add(scale(f1, alpha), scale(f2, beta)), c, s);
    Matrix rhs = add(scale(deconv2d(f1, c, s), alpha), scale(deconv2d(f2, c, s), beta));
    CHECK(max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("property: deconv2d shape law inverts the conv shape rule") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = std::uniform_int_distribution<int>(1, 6)(rng);
    const int s = std::uniform_int_distribution<int>(1, d)(rng);
    const int p = std::uniform_int_distribution<int>(1, 6)(rng);
    const int q = std::uniform_int_distribution<int>(1, 6)(rng);
    Matrix delta = deconv2d(Matrix(p, q, 1.0), Matrix(d, d, 1.0), s);
    CHECK(delta.rows() == s * (p - 1) + d);
    CHECK((delta.rows() - d) / s + 1 == p);
    CHECK((delta.cols() - d) / s + 1 == q);
    if (s == d) {
      CHECK(delta.rows() == p * s);
      CHECK(delta.cols() == q * s);
    }
  }
}

TEST_CASE("engine ops keep finite inputs finite") {
  std::mt19937_64 rng(37);
  Matrix f = random_matrix(4, 4, rng, 1e8);
  Matrix c = random_matrix(2, 2, rng, 1e8);
  CHECK(all_finite(deconv2d(f, c, 2)));
  CHECK(all_finite(conv2d_valid(f, c, 2)));
  CHECK(all_finite(matmul(f, f)));
}
