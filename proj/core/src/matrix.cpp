#include "dcft/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "dcft/errors.hpp"

namespace dcft {

namespace {

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  require_shape(rows > 0 && cols > 0,
                "matrix dims must be positive, got " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, double fill) : Matrix(rows, cols) {
  std::fill(data_.begin(), data_.end(), fill);
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  require_shape(r > 0, "from_rows: empty row list");
  const int c = static_cast<int>(rows.begin()->size());
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    require_shape(static_cast<int>(row.size()) == c, "from_rows: ragged rows");
    int j = 0;
    for (double v : row) m.at(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::gaussian(int rows, int cols, std::mt19937_64& rng, double sigma) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Matrix scale(const Matrix& a, double factor) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b),
                "hadamard: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.rows(),
                "matmul: inner dims disagree, " + a.shape_str() + " * " + b.shape_str());
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double frobenius_norm_sq(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return s;
}

double dot(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "dot: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b),
                "max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

namespace {

void check_conv_args(const Matrix& x, const Matrix& kernel, int stride) {
  if (stride < 1) throw ConfigError("conv2d_valid: stride must be >= 1, got " + std::to_string(stride));
  require_shape(kernel.rows() == kernel.cols(), "conv2d_valid: kernel must be square, got " + kernel.shape_str());
  const int d = kernel.rows();
  require_shape(x.rows() >= d && x.cols() >= d,
                "conv2d_valid: input " + x.shape_str() + " smaller than kernel " + kernel.shape_str());
  if ((x.rows() - d) % stride != 0 || (x.cols() - d) % stride != 0)
    throw ShapeError("conv2d_valid: output dims not integral for input " + x.shape_str() +
                     ", kernel " + kernel.shape_str() + ", stride " + std::to_string(stride));
}

}  // namespace

Matrix conv2d_valid(const Matrix& x, const Matrix& kernel, int stride) {
  check_conv_args(x, kernel, stride);
  const int d = kernel.rows();
  const int out_r = (x.rows() - d) / stride + 1;
  const int out_c = (x.cols() - d) / stride + 1;
  Matrix out(out_r, out_c);
  for (int i = 0; i < out_r; ++i) {
    for (int j = 0; j < out_c; ++j) {
      double acc = 0.0;
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) acc += x.at(i * stride + m, j * stride + n) * kernel.at(m, n);
      out.at(i, j) = acc;
    }
  }
  return out;
}

Matrix deconv2d(const Matrix& f, const Matrix& c, int stride) {
  require_shape(c.rows() == c.cols(), "deconv2d: kernel must be square, got " + c.shape_str());
  const int d = c.rows();
  if (stride < 1) throw ConfigError("deconv2d: stride must be >= 1, got " + std::to_string(stride));
  if (stride > d)
    throw ConfigError("deconv2d: stride " + std::to_string(stride) + " exceeds kernel dim " +
                      std::to_string(d) + "; trailing kernel entries would never be used");
  const int out_r = stride * (f.rows() - 1) + d;
  const int out_c = stride * (f.cols() - 1) + d;
  Matrix out(out_r, out_c);
  for (int i = 0; i < f.rows(); ++i) {
    for (int j = 0; j < f.cols(); ++j) {
      const double fij = f.at(i, j);
      for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v) out.at(stride * i + u, stride * j + v) += fij * c.at(u, v);
    }
  }
  return out;
}

Matrix kron(const Matrix& f, const Matrix& c) {
  Matrix out(f.rows() * c.rows(), f.cols() * c.cols());
  for (int i = 0; i < f.rows(); ++i)
    for (int j = 0; j < f.cols(); ++j) {
      const double fij = f.at(i, j);
      for (int u = 0; u < c.rows(); ++u)
        for (int v = 0; v < c.cols(); ++v)
          out.at(i * c.rows() + u, j * c.cols() + v) = fij * c.at(u, v);
    }
  return out;
}

}  // namespace dcft
