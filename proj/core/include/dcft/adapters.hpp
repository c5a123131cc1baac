#pragma once

#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dcft/matrix.hpp"
#include "dcft/tape.hpp"

namespace dcft {

/// Shape algebra for one adapted weight matrix. With padding fixed to zero,
/// f = (dim - d)/s + 1 on each axis; for s == d this reduces to f = dim/d.
struct ShapePlan {
  int d_in = 0;   // target rows
  int d_out = 0;  // target cols
  int d = 0;      // kernel dim
  int s = 0;      // stride
  int k = 1;      // subspace rank
  int f_in = 0;   // rows of the subspace matrix F
  int f_out = 0;  // cols of F

  /// Trainable count of the factored form: k*f_out + f_in*k + d*d.
  long params_after() const;
  /// Count with F held dense instead of factored: f_in*f_out + d*d.
  long params_before() const;
};

/// Computes the plan or throws ShapeError with the nearest workable d or s.
/// Throws ConfigError when the stride is outside [1, d].
ShapePlan plan_shapes(int d_in, int d_out, int d, int s, int k = 1);

/// Incremental-weight adapter reconstructing delta = deconv2d(b*a, c, s).
/// a: k x f_out, b: f_in x k, c: d x d; all three train, the host matrix
/// stays frozen.
class DcftAdapter {
 public:
  DcftAdapter() = default;
  DcftAdapter(int target_rows, int target_cols, int d, int s, int k = 1,
              std::string name = {});

  void init(std::mt19937_64& rng, double sigma = 0.02, bool zero_b = false);

  /// Differentiable delta on the tape, dims target_rows x target_cols.
  Var delta(Tape& tape);
  /// Plain delta for inference/merge; cached until invalidate().
  const Matrix& delta_matrix() const;
  void invalidate();

  long param_count() const { return plan_.params_after(); }
  const ShapePlan& plan() const { return plan_; }
  int stride() const { return plan_.s; }
  int target_rows() const { return plan_.d_in; }
  int target_cols() const { return plan_.d_out; }

  Parameter& a() { return a_; }
  Parameter& b() { return b_; }
  Parameter& c() { return c_; }
  const Parameter& a() const { return a_; }
  const Parameter& b() const { return b_; }
  const Parameter& c() const { return c_; }
  std::vector<Parameter*> params() { return {&a_, &b_, &c_}; }

 private:
  ShapePlan plan_;
  Parameter a_, b_, c_;
  mutable Matrix delta_cache_;
  mutable bool cache_valid_ = false;
};

/// Rank-r baseline: delta = b*a with a: r x d_out, b: d_in x r.
class LoraAdapter {
 public:
  LoraAdapter() = default;
  LoraAdapter(int target_rows, int target_cols, int rank, std::string name = {});

  void init(std::mt19937_64& rng, double sigma = 0.02, bool zero_b = false);

  Var delta(Tape& tape);
  const Matrix& delta_matrix() const;
  void invalidate();

  long param_count() const {
    return static_cast<long>(rank_) * (target_rows_ + target_cols_);
  }
  int rank() const { return rank_; }
  int target_rows() const { return target_rows_; }
  int target_cols() const { return target_cols_; }

  Parameter& a() { return a_; }
  Parameter& b() { return b_; }
  const Parameter& a() const { return a_; }
  const Parameter& b() const { return b_; }
  std::vector<Parameter*> params() { return {&a_, &b_}; }

 private:
  int target_rows_ = 0, target_cols_ = 0, rank_ = 0;
  Parameter a_, b_;
  mutable Matrix delta_cache_;
  mutable bool cache_valid_ = false;
};

using AnyAdapter = std::variant<DcftAdapter, LoraAdapter>;

Var adapter_delta(AnyAdapter& adapter, Tape& tape);
const Matrix& adapter_delta_matrix(const AnyAdapter& adapter);
void adapter_invalidate(AnyAdapter& adapter);
long adapter_param_count(const AnyAdapter& adapter);
std::vector<Parameter*> adapter_params(AnyAdapter& adapter);

/// (w0 + delta) * x with w0 frozen (entered as a tape constant).
Var adapted_forward(Tape& tape, AnyAdapter& adapter, const Matrix& w0, Var x);

/// Orthogonality penalty |G_a - I|_F^2 + |G_b - I|_F^2 where G_a = a*a^T and
/// G_b = b^T*b are the short-dimension Gram matrices. Zero exactly when the
/// rows of a and the columns of b are orthonormal.
Var orth_penalty(Tape& tape, Var a, Var b);
double orth_penalty_value(const Matrix& a, const Matrix& b);

/// Folds the delta into the frozen weights: W = W0 + delta.
Matrix merge(const AnyAdapter& adapter, const Matrix& w0);

struct TargetDims {
  std::string name;
  int rows = 0;
  int cols = 0;
};

struct BudgetEntry {
  std::string target;
  ShapePlan plan;
  long params_before = 0;  // dense F + kernel
  long params_after = 0;   // factored a,b + kernel
};

/// Per-target and total trainable-parameter counts with shape provenance.
struct ParamBudgetReport {
  std::vector<BudgetEntry> entries;
  int layers = 1;
  int d = 0, s = 0, k = 1;
  long total_params = 0;   // sum of params_after times layers
  long total_before = 0;   // sum of params_before times layers

  std::string to_text() const;
  std::string to_csv() const;
};

ParamBudgetReport count_params(const std::vector<TargetDims>& targets, int d, int s, int k,
                               int layers);

}  // namespace dcft
