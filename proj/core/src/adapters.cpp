#include "dcft/adapters.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "dcft/errors.hpp"

namespace dcft {

long ShapePlan::params_after() const {
  return static_cast<long>(k) * f_out + static_cast<long>(f_in) * k +
         static_cast<long>(d) * d;
}

long ShapePlan::params_before() const {
  return static_cast<long>(f_in) * f_out + static_cast<long>(d) * d;
}

namespace {

bool axis_ok(int dim, int d, int s) { return dim >= d && (dim - d) % s == 0; }

// Nearest stride in [1, d] that works for both axes; s=1 always does.
int nearest_valid_stride(int d_in, int d_out, int d, int s) {
  for (int delta = 0; delta <= d; ++delta) {
    for (int cand : {s - delta, s + delta}) {
      if (cand < 1 || cand > d) continue;
      if (axis_ok(d_in, d, cand) && axis_ok(d_out, d, cand)) return cand;
    }
  }
  return 1;
}

// Nearest kernel dim dividing both axes, for the s == d block layout.
int nearest_valid_kernel(int d_in, int d_out, int d) {
  const int g = std::gcd(d_in, d_out);
  const int limit = std::min(d_in, d_out);
  for (int delta = 0; delta <= limit; ++delta) {
    for (int cand : {d - delta, d + delta}) {
      if (cand < 1 || cand > limit) continue;
      if (g % cand == 0) return cand;
    }
  }
  return 1;
}

}  // namespace

ShapePlan plan_shapes(int d_in, int d_out, int d, int s, int k) {
  if (d < 1) throw ConfigError("plan_shapes: kernel dim must be >= 1, got " + std::to_string(d));
  if (s < 1) throw ConfigError("plan_shapes: stride must be >= 1, got " + std::to_string(s));
  if (s > d)
    throw ConfigError("plan_shapes: stride " + std::to_string(s) + " exceeds kernel dim " +
                      std::to_string(d));
  if (k < 1) throw ConfigError("plan_shapes: k must be >= 1, got " + std::to_string(k));
  if (d > std::min(d_in, d_out))
    throw ShapeError("plan_shapes: kernel dim " + std::to_string(d) + " exceeds target " +
                     std::to_string(d_in) + "x" + std::to_string(d_out));
  if (!axis_ok(d_in, d, s) || !axis_ok(d_out, d, s)) {
    std::ostringstream msg;
    msg << "plan_shapes: target " << d_in << "x" << d_out << " incompatible with d=" << d
        << ", s=" << s;
    if (s == d)
      msg << " (" << (axis_ok(d_in, d, s) ? d_out : d_in) << " is not divisible by " << d << ")";
    msg << "; nearest valid: s=" << nearest_valid_stride(d_in, d_out, d, s);
    if (s == d) msg << " or d=" << nearest_valid_kernel(d_in, d_out, d);
    throw ShapeError(msg.str());
  }
  ShapePlan plan;
  plan.d_in = d_in;
  plan.d_out = d_out;
  plan.d = d;
  plan.s = s;
  plan.k = k;
  plan.f_in = (d_in - d) / s + 1;
  plan.f_out = (d_out - d) / s + 1;
  return plan;
}

DcftAdapter::DcftAdapter(int target_rows, int target_cols, int d, int s, int k,
                         std::string name)
    : plan_(plan_shapes(target_rows, target_cols, d, s, k)) {
  a_ = Parameter(Matrix(k, plan_.f_out), name.empty() ? "a" : name + ".a");
  b_ = Parameter(Matrix(plan_.f_in, k), name.empty() ? "b" : name + ".b");
  c_ = Parameter(Matrix(d, d), name.empty() ? "c" : name + ".c");
}

void DcftAdapter::init(std::mt19937_64& rng, double sigma, bool zero_b) {
  a_.value = Matrix::gaussian(a_.value.rows(), a_.value.cols(), rng, sigma);
  b_.value = zero_b ? Matrix(b_.value.rows(), b_.value.cols())
                    : Matrix::gaussian(b_.value.rows(), b_.value.cols(), rng, sigma);
  c_.value = Matrix::gaussian(c_.value.rows(), c_.value.cols(), rng, sigma);
  invalidate();
}

Var DcftAdapter::delta(Tape& tape) {
  Var f = tape.matmul(tape.param(b_), tape.param(a_));
  return tape.deconv2d(f, tape.param(c_), plan_.s);
}

const Matrix& DcftAdapter::delta_matrix() const {
  if (!cache_valid_) {
    delta_cache_ = deconv2d(matmul(b_.value, a_.value), c_.value, plan_.s);
    cache_valid_ = true;
  }
  return delta_cache_;
}

void DcftAdapter::invalidate() { cache_valid_ = false; }

LoraAdapter::LoraAdapter(int target_rows, int target_cols, int rank, std::string name)
    : target_rows_(target_rows), target_cols_(target_cols), rank_(rank) {
  if (rank < 1) throw ConfigError("lora: rank must be >= 1, got " + std::to_string(rank));
  if (rank > std::min(target_rows, target_cols))
    throw ShapeError("lora: rank " + std::to_string(rank) + " exceeds target " +
                     std::to_string(target_rows) + "x" + std::to_string(target_cols));
  a_ = Parameter(Matrix(rank, target_cols), name.empty() ? "a" : name + ".a");
  b_ = Parameter(Matrix(target_rows, rank), name.empty() ? "b" : name + ".b");
}

void LoraAdapter::init(std::mt19937_64& rng, double sigma, bool zero_b) {
  a_.value = Matrix::gaussian(a_.value.rows(), a_.value.cols(), rng, sigma);
  b_.value = zero_b ? Matrix(b_.value.rows(), b_.value.cols())
                    : Matrix::gaussian(b_.value.rows(), b_.value.cols(), rng, sigma);
  invalidate();
}

Var LoraAdapter::delta(Tape& tape) { return tape.matmul(tape.param(b_), tape.param(a_)); }

const Matrix& LoraAdapter::delta_matrix() const {
  if (!cache_valid_) {
    delta_cache_ = matmul(b_.value, a_.value);
    cache_valid_ = true;
  }
  return delta_cache_;
}

void LoraAdapter::invalidate() { cache_valid_ = false; }

Var adapter_delta(AnyAdapter& adapter, Tape& tape) {
  return std::visit([&tape](auto& a) { return a.delta(tape); }, adapter);
}

const Matrix& adapter_delta_matrix(const AnyAdapter& adapter) {
  return std::visit([](const auto& a) -> const Matrix& { return a.delta_matrix(); }, adapter);
}

void adapter_invalidate(AnyAdapter& adapter) {
  std::visit([](auto& a) { a.invalidate(); }, adapter);
}

long adapter_param_count(const AnyAdapter& adapter) {
  return std::visit([](const auto& a) { return a.param_count(); }, adapter);
}

std::vector<Parameter*> adapter_params(AnyAdapter& adapter) {
  return std::visit([](auto& a) { return a.params(); }, adapter);
}

namespace {

void check_target_dims(const Matrix& w0, int rows, int cols) {
  if (w0.rows() != rows || w0.cols() != cols)
    throw ShapeError("adapter targets " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " but frozen weights are " + w0.shape_str());
}

}  // namespace

Var adapted_forward(Tape& tape, AnyAdapter& adapter, const Matrix& w0, Var x) {
  std::visit([&](const auto& a) { check_target_dims(w0, a.target_rows(), a.target_cols()); },
             adapter);
  Var effective = tape.add(tape.constant(w0), adapter_delta(adapter, tape));
  return tape.matmul(effective, x);
}

Var orth_penalty(Tape& tape, Var a, Var b) {
  Var gram_a = tape.matmul(a, tape.transpose(a));
  Var gram_b = tape.matmul(tape.transpose(b), b);
  Var pa = tape.frobenius_norm_sq(tape.sub(gram_a, tape.constant(Matrix::identity(gram_a.value().rows()))));
  Var pb = tape.frobenius_norm_sq(tape.sub(gram_b, tape.constant(Matrix::identity(gram_b.value().rows()))));
  return tape.add(pa, pb);
}

double orth_penalty_value(const Matrix& a, const Matrix& b) {
  const Matrix gram_a = matmul(a, transpose(a));
  const Matrix gram_b = matmul(transpose(b), b);
  return frobenius_norm_sq(sub(gram_a, Matrix::identity(gram_a.rows()))) +
         frobenius_norm_sq(sub(gram_b, Matrix::identity(gram_b.rows())));
}

Matrix merge(const AnyAdapter& adapter, const Matrix& w0) {
  const Matrix& delta = adapter_delta_matrix(adapter);
  if (!w0.same_shape(delta))
    throw ShapeError("merge: frozen weights " + w0.shape_str() + " vs delta " + delta.shape_str());
  return add(w0, delta);
}

ParamBudgetReport count_params(const std::vector<TargetDims>& targets, int d, int s, int k,
                               int layers) {
  if (layers < 1) throw ConfigError("count_params: layers must be >= 1");
  ParamBudgetReport report;
  report.layers = layers;
  report.d = d;
  report.s = s;
  report.k = k;
  for (const TargetDims& t : targets) {
    BudgetEntry entry;
    entry.target = t.name;
    entry.plan = plan_shapes(t.rows, t.cols, d, s, k);
    entry.params_before = entry.plan.params_before();
    entry.params_after = entry.plan.params_after();
    report.total_params += entry.params_after * layers;
    report.total_before += entry.params_before * layers;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::string ParamBudgetReport::to_text() const {
  std::ostringstream os;
  os << "target        dims           f_in  f_out  dense_F  factored\n";
  for (const BudgetEntry& e : entries) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s  %5dx%-6d  %4d  %5d  %7ld  %8ld\n",
                  e.target.c_str(), e.plan.d_in, e.plan.d_out, e.plan.f_in, e.plan.f_out,
                  e.params_before, e.params_after);
    os << line;
  }
  os << "layers: " << layers << "  d: " << d << "  s: " << s << "  k: " << k << "\n";
  os << "total trainable: " << total_params << "  (dense-F form: " << total_before << ")\n";
  return os.str();
}

std::string ParamBudgetReport::to_csv() const {
  std::ostringstream os;
  os << "target,rows,cols,d,s,k,f_in,f_out,params_before,params_after,layers\n";
  for (const BudgetEntry& e : entries)
    os << e.target << ',' << e.plan.d_in << ',' << e.plan.d_out << ',' << e.plan.d << ','
       << e.plan.s << ',' << e.plan.k << ',' << e.plan.f_in << ',' << e.plan.f_out << ','
       << e.params_before << ',' << e.params_after << ',' << layers << "\n";
  os << "total,,,,,,,," << total_before << ',' << total_params << ',' << layers << "\n";
  return os.str();
}

}  // namespace dcft
