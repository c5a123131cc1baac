#include "dcft/tape.hpp"

#include <cmath>
#include <numbers>

#include "dcft/errors.hpp"

namespace dcft {

const Matrix& Var::value() const { return tape->value(*this); }
const Matrix& Var::grad() const { return tape->grad(*this); }

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape != this || v.index >= nodes_.size())
    throw UsageError(std::string(op) + ": var does not belong to this tape");
}

Var Tape::push(Matrix value, std::function<void()> pull, Parameter* bound) {
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.pull = std::move(pull);
  node.bound = bound;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.index].value;
}

const Matrix& Tape::grad(Var v) const {
  check_owned(v, "grad");
  return nodes_[v.index].grad;
}

Var Tape::param(Parameter& p) {
  if (p.value.empty()) throw UsageError("param: parameter '" + p.name + "' has no value");
  return push(p.value, {}, &p);
}

Var Tape::constant(Matrix m) {
  if (m.empty()) throw UsageError("constant: empty matrix");
  return push(std::move(m), {});
}

Var Tape::add(Var a, Var b) {
  check_owned(a, "add");
  check_owned(b, "add");
  Var out = push(dcft::add(value(a), value(b)), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, b, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& ga = grad_mut(a);
    Matrix& gb = grad_mut(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_owned(a, "sub");
  check_owned(b, "sub");
  Var out = push(dcft::sub(value(a), value(b)), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, b, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& ga = grad_mut(a);
    Matrix& gb = grad_mut(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return out;
}

Var Tape::scale(Var a, double factor) {
  check_owned(a, "scale");
  Var out = push(dcft::scale(value(a), factor), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, factor, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& ga = grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  };
  return out;
}

Var Tape::hadamard(Var a, Var b) {
  check_owned(a, "hadamard");
  check_owned(b, "hadamard");
  Var out = push(dcft::hadamard(value(a), value(b)), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, b, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Matrix& ga = grad_mut(a);
    Matrix& gb = grad_mut(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  Var out = push(dcft::matmul(value(a), value(b)), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, b, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    // grad_a += g * b^T
    Matrix& ga = grad_mut(a);
    for (int i = 0; i < av.rows(); ++i)
      for (int k = 0; k < av.cols(); ++k) {
        double acc = 0.0;
        for (int j = 0; j < bv.cols(); ++j) acc += g.at(i, j) * bv.at(k, j);
        ga.at(i, k) += acc;
      }
    // grad_b += a^T * g
    Matrix& gb = grad_mut(b);
    for (int k = 0; k < bv.rows(); ++k)
      for (int j = 0; j < bv.cols(); ++j) {
        double acc = 0.0;
        for (int i = 0; i < av.rows(); ++i) acc += av.at(i, k) * g.at(i, j);
        gb.at(k, j) += acc;
      }
  };
  return out;
}

Var Tape::transpose(Var a) {
  check_owned(a, "transpose");
  Var out = push(dcft::transpose(value(a)), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& ga = grad_mut(a);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
  };
  return out;
}

Var Tape::relu(Var a) {
  check_owned(a, "relu");
  const Matrix& av = value(a);
  Matrix y(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] > 0.0 ? av[i] : 0.0;
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& av = value(a);
    Matrix& ga = grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  };
  return out;
}

Var Tape::gelu(Var a) {
  check_owned(a, "gelu");
  const Matrix& av = value(a);
  Matrix y(av.rows(), av.cols());
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < av.size(); ++i)
    y[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * inv_sqrt2));
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& av = value(a);
    Matrix& ga = grad_mut(a);
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      ga[i] += g[i] * (cdf + x * pdf);
    }
  };
  return out;
}

Var Tape::softmax_rows(Var a) {
  check_owned(a, "softmax_rows");
  const Matrix& av = value(a);
  Matrix y(av.rows(), av.cols());
  for (int i = 0; i < av.rows(); ++i) {
    double m = av.at(i, 0);
    for (int j = 1; j < av.cols(); ++j) m = std::max(m, av.at(i, j));
    double z = 0.0;
    for (int j = 0; j < av.cols(); ++j) {
      y.at(i, j) = std::exp(av.at(i, j) - m);
      z += y.at(i, j);
    }
    for (int j = 0; j < av.cols(); ++j) y.at(i, j) /= z;
  }
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, a, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& y = nodes_[oi].value;
    Matrix& ga = grad_mut(a);
    for (int i = 0; i < y.rows(); ++i) {
      double gy = 0.0;
      for (int j = 0; j < y.cols(); ++j) gy += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols(); ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - gy);
    }
  };
  return out;
}

Var Tape::conv2d_valid(Var x, Var kernel, int stride) {
  check_owned(x, "conv2d_valid");
  check_owned(kernel, "conv2d_valid");
  Var out = push(dcft::conv2d_valid(value(x), value(kernel), stride), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, x, kernel, stride, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& xv = value(x);
    const Matrix& kv = value(kernel);
    Matrix& gx = grad_mut(x);
    Matrix& gk = grad_mut(kernel);
    const int d = kv.rows();
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) {
        const double gij = g.at(i, j);
        for (int m = 0; m < d; ++m)
          for (int n = 0; n < d; ++n) {
            gx.at(i * stride + m, j * stride + n) += gij * kv.at(m, n);
            gk.at(m, n) += gij * xv.at(i * stride + m, j * stride + n);
          }
      }
  };
  return out;
}

Var Tape::deconv2d(Var f, Var c, int stride) {
  check_owned(f, "deconv2d");
  check_owned(c, "deconv2d");
  Var out = push(dcft::deconv2d(value(f), value(c), stride), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, f, c, stride, oi]() {
    const Matrix& g = nodes_[oi].grad;
    const Matrix& fv = value(f);
    const Matrix& cv = value(c);
    Matrix& gf = grad_mut(f);
    Matrix& gc = grad_mut(c);
    const int d = cv.rows();
    for (int i = 0; i < fv.rows(); ++i)
      for (int j = 0; j < fv.cols(); ++j) {
        double acc = 0.0;
        const double fij = fv.at(i, j);
        for (int u = 0; u < d; ++u)
          for (int v = 0; v < d; ++v) {
            const double gduv = g.at(stride * i + u, stride * j + v);
            acc += gduv * cv.at(u, v);
            gc.at(u, v) += gduv * fij;
          }
        gf.at(i, j) += acc;
      }
  };
  return out;
}

Var Tape::frobenius_norm_sq(Var x) {
  check_owned(x, "frobenius_norm_sq");
  Matrix y(1, 1);
  y.at(0, 0) = dcft::frobenius_norm_sq(value(x));
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, x, oi]() {
    const double g0 = nodes_[oi].grad.at(0, 0);
    const Matrix& xv = value(x);
    Matrix& gx = grad_mut(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * g0 * xv[i];
  };
  return out;
}

Var Tape::sum(Var x) {
  check_owned(x, "sum");
  Matrix y(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < value(x).size(); ++i) acc += value(x)[i];
  y.at(0, 0) = acc;
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, x, oi]() {
    const double g0 = nodes_[oi].grad.at(0, 0);
    Matrix& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g0;
  };
  return out;
}

Var Tape::mean_cols(Var x) {
  check_owned(x, "mean_cols");
  const Matrix& xv = value(x);
  Matrix y(xv.rows(), 1);
  for (int i = 0; i < xv.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < xv.cols(); ++j) acc += xv.at(i, j);
    y.at(i, 0) = acc / xv.cols();
  }
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, x, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& gx = grad_mut(x);
    const double inv = 1.0 / gx.cols();
    for (int i = 0; i < gx.rows(); ++i)
      for (int j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(i, 0) * inv;
  };
  return out;
}

Var Tape::slice_rows(Var x, int row_begin, int row_end) {
  check_owned(x, "slice_rows");
  const Matrix& xv = value(x);
  if (!(0 <= row_begin && row_begin < row_end && row_end <= xv.rows()))
    throw ShapeError("slice_rows: range [" + std::to_string(row_begin) + "," +
                     std::to_string(row_end) + ") invalid for " + xv.shape_str());
  Matrix y(row_end - row_begin, xv.cols());
  for (int i = row_begin; i < row_end; ++i)
    for (int j = 0; j < xv.cols(); ++j) y.at(i - row_begin, j) = xv.at(i, j);
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, x, row_begin, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& gx = grad_mut(x);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) gx.at(row_begin + i, j) += g.at(i, j);
  };
  return out;
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no parts");
  int total_rows = 0;
  const int cols = value(parts[0]).cols();
  for (Var p : parts) {
    check_owned(p, "concat_rows");
    if (value(p).cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + value(p).shape_str());
    total_rows += value(p).rows();
  }
  Matrix y(total_rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Matrix& pv = value(p);
    for (int i = 0; i < pv.rows(); ++i)
      for (int j = 0; j < cols; ++j) y.at(off + i, j) = pv.at(i, j);
    off += pv.rows();
  }
  std::vector<Var> held(parts.begin(), parts.end());
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, held = std::move(held), oi]() {
    const Matrix& g = nodes_[oi].grad;
    int off = 0;
    for (Var p : held) {
      Matrix& gp = grad_mut(p);
      for (int i = 0; i < gp.rows(); ++i)
        for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(off + i, j);
      off += gp.rows();
    }
  };
  return out;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no parts");
  int total_cols = 0;
  const int rows = value(parts[0]).rows();
  for (Var p : parts) {
    check_owned(p, "concat_cols");
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch " + value(p).shape_str());
    total_cols += value(p).cols();
  }
  Matrix y(rows, total_cols);
  int off = 0;
  for (Var p : parts) {
    const Matrix& pv = value(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < pv.cols(); ++j) y.at(i, off + j) = pv.at(i, j);
    off += pv.cols();
  }
  std::vector<Var> held(parts.begin(), parts.end());
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, held = std::move(held), oi]() {
    const Matrix& g = nodes_[oi].grad;
    int off = 0;
    for (Var p : held) {
      Matrix& gp = grad_mut(p);
      for (int i = 0; i < gp.rows(); ++i)
        for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, off + j);
      off += gp.cols();
    }
  };
  return out;
}

Var Tape::add_broadcast_col(Var x, Var col) {
  check_owned(x, "add_broadcast_col");
  check_owned(col, "add_broadcast_col");
  const Matrix& xv = value(x);
  const Matrix& cv = value(col);
  if (cv.cols() != 1 || cv.rows() != xv.rows())
    throw ShapeError("add_broadcast_col: " + cv.shape_str() + " does not broadcast over " +
                     xv.shape_str());
  Matrix y(xv.rows(), xv.cols());
  for (int i = 0; i < xv.rows(); ++i)
    for (int j = 0; j < xv.cols(); ++j) y.at(i, j) = xv.at(i, j) + cv.at(i, 0);
  Var out = push(std::move(y), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, x, col, oi]() {
    const Matrix& g = nodes_[oi].grad;
    Matrix& gx = grad_mut(x);
    Matrix& gc = grad_mut(col);
    for (int i = 0; i < g.rows(); ++i) {
      double row_acc = 0.0;
      for (int j = 0; j < g.cols(); ++j) {
        gx.at(i, j) += g.at(i, j);
        row_acc += g.at(i, j);
      }
      gc.at(i, 0) += row_acc;
    }
  };
  return out;
}

Var Tape::cross_entropy_rows(Var logits, std::span<const int> labels) {
  check_owned(logits, "cross_entropy_rows");
  const Matrix& lv = value(logits);
  if (static_cast<int>(labels.size()) != lv.rows())
    throw ShapeError("cross_entropy_rows: " + std::to_string(labels.size()) + " labels for " +
                     lv.shape_str() + " logits");
  for (int y : labels)
    if (y < 0 || y >= lv.cols())
      throw DataError("cross_entropy_rows: label " + std::to_string(y) + " outside [0," +
                      std::to_string(lv.cols()) + ")");
  const int n = lv.rows();
  Matrix out_v(1, 1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double m = lv.at(i, 0);
    for (int j = 1; j < lv.cols(); ++j) m = std::max(m, lv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < lv.cols(); ++j) z += std::exp(lv.at(i, j) - m);
    total += m + std::log(z) - lv.at(i, labels[i]);
  }
  out_v.at(0, 0) = total / n;
  std::vector<int> held(labels.begin(), labels.end());
  Var out = push(std::move(out_v), {});
  const std::uint32_t oi = out.index;
  nodes_[oi].pull = [this, logits, held = std::move(held), oi]() {
    const double g0 = nodes_[oi].grad.at(0, 0);
    const Matrix& lv = value(logits);
    Matrix& gl = grad_mut(logits);
    const int n = lv.rows();
    for (int i = 0; i < n; ++i) {
      double m = lv.at(i, 0);
      for (int j = 1; j < lv.cols(); ++j) m = std::max(m, lv.at(i, j));
      double z = 0.0;
      for (int j = 0; j < lv.cols(); ++j) z += std::exp(lv.at(i, j) - m);
      for (int j = 0; j < lv.cols(); ++j) {
        const double p = std::exp(lv.at(i, j) - m) / z;
        gl.at(i, j) += g0 * (p - (j == held[i] ? 1.0 : 0.0)) / n;
      }
    }
  };
  return out;
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw UsageError("backward: loss must be scalar (1x1), got " + lv.shape_str());
  for (Node& n : nodes_) n.grad.fill(0.0);
  nodes_[loss.index].grad.at(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].pull) nodes_[i].pull();
  }
  for (Node& n : nodes_) {
    if (n.bound == nullptr) continue;
    Matrix& pg = n.bound->grad;
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
  }
}

}  // namespace dcft
