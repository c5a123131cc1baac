#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcft/matrix.hpp"

namespace dcft {

/// Persistent trainable matrix: the value survives across steps, the gradient
/// buffer accumulates until the caller zeroes it.
struct Parameter {
  Matrix value;
  Matrix grad;
  std::string name;

  Parameter() = default;
  explicit Parameter(Matrix v, std::string n = {})
      : value(std::move(v)), grad(value.rows(), value.cols()), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a specific tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;

  const Matrix& value() const;
  const Matrix& grad() const;
};

/// Record of matrix operations in topological order. backward() replays the
/// recorded pull rules in reverse, accumulating gradients additively; each
/// call adds exactly one unit of seeding into every reachable Parameter.
///
/// A tape is single-threaded; independent tapes may run on separate threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient flows into `p.grad` on backward().
  Var param(Parameter& p);
  /// Leaf excluded from training; gradients stop here.
  Var constant(Matrix m);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double factor);
  Var hadamard(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var relu(Var a);
  Var gelu(Var a);
  Var softmax_rows(Var a);
  Var conv2d_valid(Var x, Var kernel, int stride);
  Var deconv2d(Var f, Var c, int stride);
  Var frobenius_norm_sq(Var x);  // 1x1
  Var sum(Var x);                // 1x1
  Var mean_cols(Var x);          // r x 1
  Var slice_rows(Var x, int row_begin, int row_end);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var add_broadcast_col(Var x, Var col);
  /// Mean cross-entropy of row-wise logits against integer labels; 1x1.
  Var cross_entropy_rows(Var logits, std::span<const int> labels);

  /// Seeds d(loss)/d(loss)=1 and pulls gradients back through the record.
  /// `loss` must be 1x1. Node gradients are reset first, so calling twice
  /// accumulates exactly twice into every Parameter.
  void backward(Var loss);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> pull;  // accumulates into operand grads; empty for leaves
    Parameter* bound = nullptr;
  };

  Var push(Matrix value, std::function<void()> pull, Parameter* bound = nullptr);
  Matrix& grad_mut(Var v) { return nodes_[v.index].grad; }
  void check_owned(Var v, const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace dcft
