#pragma once

// Shared helpers for the unit tests. The finite-difference and brute-force
// routines here are deliberately independent of the library's own code paths
// so they can serve as oracles.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dcft/matrix.hpp"
#include "dcft/tape.hpp"

namespace dcft::test {

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double sigma = 1.0) {
  return Matrix::gaussian(rows, cols, rng, sigma);
}

// Random matrix with entries bounded away from zero, for ops with kinks.
inline Matrix random_matrix_away_from_zero(int rows, int cols, std::mt19937_64& rng,
                                           double min_abs = 0.1) {
  Matrix m = Matrix::gaussian(rows, cols, rng, 1.0);
  for (auto& v : m.data()) {
    if (std::abs(v) < min_abs) v = v < 0 ? v - min_abs : v + min_abs;
  }
  return m;
}

// Central finite differences of `loss` w.r.t. every coordinate of `params`,
// compared against the gradients already accumulated in each Parameter.
// Returns the max relative error with denominator max(|analytic|,|numeric|,floor).
inline double finite_diff_max_rel_err(const std::function<double()>& loss,
                                      std::vector<Parameter*> params, double eps = 1e-5,
                                      double floor = 1e-12) {
  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = loss();
      p->value[i] = saved - eps;
      const double down = loss();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

// Naive convolution written as its definition; the oracle for conv2d_valid.
inline Matrix brute_force_conv(const Matrix& x, const Matrix& k, int stride) {
  const int d = k.rows();
  const int out_r = (x.rows() - d) / stride + 1;
  const int out_c = (x.cols() - d) / stride + 1;
  Matrix out(out_r, out_c);
  for (int i = 0; i < out_r; ++i)
    for (int j = 0; j < out_c; ++j)
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n)
          out.at(i, j) += x.at(i * stride + m, j * stride + n) * k.at(m, n);
  return out;
}

// Scatter-add transposed convolution written as its definition.
inline Matrix brute_force_deconv(const Matrix& f, const Matrix& c, int stride) {
  const int d = c.rows();
  Matrix out(stride * (f.rows() - 1) + d, stride * (f.cols() - 1) + d);
  for (int i = 0; i < f.rows(); ++i)
    for (int j = 0; j < f.cols(); ++j)
      for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v)
          out.at(stride * i + u, stride * j + v) += f.at(i, j) * c.at(u, v);
  return out;
}

// Block-construction Kronecker product, independent of dcft::kron.
inline Matrix brute_force_kron(const Matrix& f, const Matrix& c) {
  Matrix out(f.rows() * c.rows(), f.cols() * c.cols());
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j)
      out.at(i, j) = f.at(i / c.rows(), j / c.cols()) * c.at(i % c.rows(), j % c.cols());
  return out;
}

}  // namespace dcft::test
