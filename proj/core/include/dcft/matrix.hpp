#pragma once

#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dcft {

/// Dense row-major matrix of 64-bit reals. The universal value type of the
/// engine; plain functions below are the non-differentiating counterparts of
/// the tape operations and double as test oracles.
class Matrix {
 public:
  Matrix() = default;  // empty 0x0, only valid as a placeholder
  Matrix(int rows, int cols);
  Matrix(int rows, int cols, double fill);

  static Matrix identity(int n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix gaussian(int rows, int cols, std::mt19937_64& rng, double sigma);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-recorded) operations.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double factor);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double frobenius_norm_sq(const Matrix& a);
double dot(const Matrix& a, const Matrix& b);  // flattened inner product
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

/// Valid (P=0) strided convolution: Y(i,j) = sum_{m,n} X(i*s+m, j*s+n) * K(m,n).
Matrix conv2d_valid(const Matrix& x, const Matrix& kernel, int stride);

/// Strided transposed convolution, scatter-add form. Output has dims
/// (s*(p-1)+d) x (s*(q-1)+d) and receives F(i,j)*C(u,v) at (s*i+u, s*j+v).
Matrix deconv2d(const Matrix& f, const Matrix& c, int stride);

/// Kronecker product; block (i,j) of the result is F(i,j)*C. Equals
/// deconv2d(f, c, s) whenever s equals the kernel dim.
Matrix kron(const Matrix& f, const Matrix& c);

}  // namespace dcft
