#include "lab/autodiff.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "lab/errors.hpp"
#include "lab/numeric.hpp"

namespace lab::ad {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
  int arity;  // -1: variadic (>= 1)
};

constexpr std::array<OpInfo, 18> kOps{{
    {Op::Leaf, "leaf", 0},
    {Op::Constant, "constant", 0},
    {Op::Add, "add", 2},
    {Op::Subtract, "subtract", 2},
    {Op::Multiply, "multiply", 2},
    {Op::Scale, "scale", 1},
    {Op::MatMul, "matmul", 2},
    {Op::Transpose, "transpose", 1},
    {Op::Exp, "exp", 1},
    {Op::Log, "log", 1},
    {Op::Tanh, "tanh", 1},
    {Op::Sum, "sum", 1},
    {Op::Dot, "dot", 2},
    {Op::Norm, "norm", 1},
    {Op::Cosine, "cosine", 2},
    {Op::LogSumExpRows, "logsumexp", 1},
    {Op::SoftmaxRows, "softmax_rows", 1},
    {Op::ConcatRows, "concat_rows", -1},
}};

const OpInfo& info(Op op) { return kOps[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(std::string_view name) {
  for (const auto& entry : kOps) {
    if (entry.arity != 0 && entry.name == name) return entry.op;
  }
  return std::nullopt;
}

Matrix map(const Matrix& m, double (*f)(double)) {
  Matrix out = m;
  for (auto& v : out.data()) v = f(v);
  return out;
}

Matrix forward(Op op, std::span<const Matrix* const> a, double param) {
  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      throw Error("forward: leaves have no rule");
    case Op::Add:
      return add(*a[0], *a[1]);
    case Op::Subtract:
      return subtract(*a[0], *a[1]);
    case Op::Multiply:
      return hadamard(*a[0], *a[1]);
    case Op::Scale:
      return scale(*a[0], param);
    case Op::MatMul:
      return matmul(*a[0], *a[1]);
    case Op::Transpose:
      return transpose(*a[0]);
    case Op::Exp:
      return map(*a[0], [](double x) { return std::exp(x); });
    case Op::Log:
      return map(*a[0], [](double x) { return std::log(x); });
    case Op::Tanh:
      return map(*a[0], [](double x) { return std::tanh(x); });
    case Op::Sum:
      return Matrix(1, 1, sum(*a[0]));
    case Op::Dot:
      if (!a[0]->same_shape(*a[1])) throw DimensionError("dot: shape mismatch");
      return Matrix(1, 1, lab::dot(a[0]->data(), a[1]->data()));
    case Op::Norm:
      return Matrix(1, 1, lab::norm(a[0]->data()));
    case Op::Cosine:
      return cosine_matrix(*a[0], *a[1]);
    case Op::LogSumExpRows: {
      Matrix out(a[0]->rows(), 1);
      for (std::size_t r = 0; r < a[0]->rows(); ++r) out(r, 0) = logsumexp(a[0]->row(r));
      return out;
    }
    case Op::SoftmaxRows:
      return lab::softmax_rows(*a[0], param);
    case Op::ConcatRows: {
      std::size_t rows = 0;
      const std::size_t cols = a[0]->cols();
      for (const Matrix* m : a) {
        if (m->cols() != cols) throw DimensionError("concat_rows: column mismatch");
        rows += m->rows();
      }
      std::vector<double> data;
      data.reserve(rows * cols);
      for (const Matrix* m : a) data.insert(data.end(), m->data().begin(), m->data().end());
      return Matrix(rows, cols, std::move(data));
    }
  }
  throw UnsupportedOperationError("forward: unknown op");
}

void accumulate(Matrix& target, const Matrix& delta) {
  if (target.empty() && !delta.empty()) {
    target = delta;
    return;
  }
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += delta[i];
}

}  // namespace

std::string_view op_name(Op op) { return info(op).name; }

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw Error("Var: not attached to a tape");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(const std::string& name, Matrix value) {
  if (inputs_.contains(name)) throw ConfigError("Tape: duplicate input '" + name + "'");
  Var v = push(Node{Op::Leaf, {}, 0.0, true, std::move(value)});
  inputs_.emplace(name, v.id());
  return v;
}

Var Tape::constant(Matrix value) { return push(Node{Op::Constant, {}, 0.0, false, std::move(value)}); }

Var Tape::apply(std::string_view op, std::span<const Var> args, double param) {
  const auto resolved = op_from_name(op);
  if (!resolved) throw UnsupportedOperationError("unsupported operation '" + std::string(op) + "'");
  return record(*resolved, args, param);
}

Var Tape::record(Op op, std::span<const Var> args, double param) {
  const OpInfo& meta = info(op);
  if (meta.arity == 0) throw UnsupportedOperationError("record: use leaf() or constant()");
  if ((meta.arity > 0 && args.size() != static_cast<std::size_t>(meta.arity)) ||
      (meta.arity < 0 && args.empty())) {
    throw DimensionError("op '" + std::string(meta.name) + "': wrong number of operands");
  }
  Node node{op, {}, param, false, {}};
  std::vector<const Matrix*> operands;
  node.parents.reserve(args.size());
  operands.reserve(args.size());
  for (const Var& v : args) {
    if (v.tape_ != this) throw Error("op '" + std::string(meta.name) + "': operand from another tape");
    node.parents.push_back(v.id_);
    node.needs_grad = node.needs_grad || nodes_[v.id_].needs_grad;
    operands.push_back(&nodes_[v.id_].value);
  }
  node.value = forward(op, operands, param);
  return push(std::move(node));
}

const Matrix& Tape::value(Var v) const { return nodes_.at(v.id_).value; }

std::map<std::string, Matrix> Tape::gradients(Var output) const {
  const Node& out = nodes_.at(output.id_);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw DimensionError("gradients: output must be a 1x1 scalar");
  }
  std::vector<Matrix> grads(output.id_ + 1);
  grads[output.id_] = Matrix(1, 1, 1.0);

  for (std::size_t idx = output.id_ + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    const Matrix& g = grads[idx];
    if (g.empty() || !n.needs_grad || n.op == Op::Leaf) continue;
    const auto parent = [&](std::size_t i) -> const Node& { return nodes_[n.parents[i]]; };
    const auto push_grad = [&](std::size_t i, const Matrix& delta) {
      if (parent(i).needs_grad) accumulate(grads[n.parents[i]], delta);
    };

    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::Add:
        push_grad(0, g);
        push_grad(1, g);
        break;
      case Op::Subtract:
        push_grad(0, g);
        push_grad(1, scale(g, -1.0));
        break;
      case Op::Multiply:
        push_grad(0, hadamard(g, parent(1).value));
        push_grad(1, hadamard(g, parent(0).value));
        break;
      case Op::Scale:
        push_grad(0, scale(g, n.param));
        break;
      case Op::MatMul:
        if (parent(0).needs_grad) push_grad(0, matmul(g, transpose(parent(1).value)));
        if (parent(1).needs_grad) push_grad(1, matmul(transpose(parent(0).value), g));
        break;
      case Op::Transpose:
        push_grad(0, transpose(g));
        break;
      case Op::Exp:
        push_grad(0, hadamard(g, n.value));
        break;
      case Op::Log: {
        Matrix d = g;
        const Matrix& x = parent(0).value;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
        push_grad(0, d);
        break;
      }
      case Op::Tanh: {
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - n.value[i] * n.value[i];
        push_grad(0, d);
        break;
      }
      case Op::Sum: {
        const Matrix& x = parent(0).value;
        push_grad(0, Matrix(x.rows(), x.cols(), g.scalar()));
        break;
      }
      case Op::Dot:
        push_grad(0, scale(parent(1).value, g.scalar()));
        push_grad(1, scale(parent(0).value, g.scalar()));
        break;
      case Op::Norm: {
        const double nv = n.value.scalar();
        const Matrix& x = parent(0).value;
        push_grad(0, nv == 0.0 ? Matrix(x.rows(), x.cols()) : scale(x, g.scalar() / nv));
        break;
      }
      case Op::Cosine: {
        // d cos(a_i, b_j) / d a_i = b_j / (|a_i||b_j|) - cos_ij * a_i / |a_i|^2
        const Matrix& a = parent(0).value;
        const Matrix& b = parent(1).value;
        const Matrix& c = n.value;
        std::vector<double> na(a.rows()), nb(b.rows());
        for (std::size_t i = 0; i < a.rows(); ++i) na[i] = lab::norm(a.row(i));
        for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = lab::norm(b.row(j));
        if (parent(0).needs_grad) {
          Matrix ga(a.rows(), a.cols());
          for (std::size_t i = 0; i < a.rows(); ++i) {
            auto out_row = ga.row(i);
            double gc = 0.0;
            for (std::size_t j = 0; j < b.rows(); ++j) {
              const double coef = g(i, j) / (na[i] * nb[j]);
              gc += g(i, j) * c(i, j);
              const auto bj = b.row(j);
              for (std::size_t d = 0; d < a.cols(); ++d) out_row[d] += coef * bj[d];
            }
            const auto ai = a.row(i);
            const double s = gc / (na[i] * na[i]);
            for (std::size_t d = 0; d < a.cols(); ++d) out_row[d] -= s * ai[d];
          }
          push_grad(0, ga);
        }
        if (parent(1).needs_grad) {
          Matrix gb(b.rows(), b.cols());
          for (std::size_t j = 0; j < b.rows(); ++j) {
            auto out_row = gb.row(j);
            double gc = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) {
              const double coef = g(i, j) / (na[i] * nb[j]);
              gc += g(i, j) * c(i, j);
              const auto ai = a.row(i);
              for (std::size_t d = 0; d < b.cols(); ++d) out_row[d] += coef * ai[d];
            }
            const auto bj = b.row(j);
            const double s = gc / (nb[j] * nb[j]);
            for (std::size_t d = 0; d < b.cols(); ++d) out_row[d] -= s * bj[d];
          }
          push_grad(1, gb);
        }
        break;
      }
      case Op::LogSumExpRows: {
        const Matrix& x = parent(0).value;
        Matrix d(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const double lse = n.value(r, 0);
          for (std::size_t c = 0; c < x.cols(); ++c) d(r, c) = g(r, 0) * std::exp(x(r, c) - lse);
        }
        push_grad(0, d);
        break;
      }
      case Op::SoftmaxRows: {
        const Matrix& y = n.value;
        Matrix d(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double inner = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) inner += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c) d(r, c) = y(r, c) * (g(r, c) - inner) / n.param;
        }
        push_grad(0, d);
        break;
      }
      case Op::ConcatRows: {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
          const Matrix& part = parent(i).value;
          if (parent(i).needs_grad) {
            const auto begin = g.data().begin() + static_cast<std::ptrdiff_t>(offset * g.cols());
            push_grad(i, Matrix(part.rows(), part.cols(),
                                std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(part.size()))));
          }
          offset += part.rows();
        }
        break;
      }
    }
  }

  std::map<std::string, Matrix> result;
  for (const auto& [name, id] : inputs_) {
    const Matrix& v = nodes_[id].value;
    result.emplace(name, (id < grads.size() && !grads[id].empty()) ? grads[id] : Matrix(v.rows(), v.cols()));
  }
  return result;
}

Matrix Tape::replay(Var output) const {
  std::vector<Matrix> values(output.id_ + 1);
  for (std::size_t idx = 0; idx <= output.id_; ++idx) {
    const Node& n = nodes_[idx];
    if (n.op == Op::Leaf || n.op == Op::Constant) {
      values[idx] = n.value;
      continue;
    }
    std::vector<const Matrix*> operands;
    operands.reserve(n.parents.size());
    for (std::size_t p : n.parents) operands.push_back(&values[p]);
    values[idx] = forward(n.op, operands, n.param);
  }
  return values[output.id_];
}

namespace {

Var binary(Op op, Var a, Var b, double param = 0.0) {
  const std::array<Var, 2> args{a, b};
  return a.tape()->record(op, args, param);
}

Var unary(Op op, Var a, double param = 0.0) {
  const std::array<Var, 1> args{a};
  return a.tape()->record(op, args, param);
}

}  // namespace

Var operator+(Var a, Var b) { return binary(Op::Add, a, b); }
Var operator-(Var a, Var b) { return binary(Op::Subtract, a, b); }
Var operator*(Var a, Var b) { return binary(Op::Multiply, a, b); }
Var operator*(double s, Var a) { return unary(Op::Scale, a, s); }
Var scale(Var a, double s) { return unary(Op::Scale, a, s); }
Var matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var transpose(Var a) { return unary(Op::Transpose, a); }
Var exp(Var a) { return unary(Op::Exp, a); }
Var log(Var a) { return unary(Op::Log, a); }
Var tanh(Var a) { return unary(Op::Tanh, a); }
Var sum(Var a) { return unary(Op::Sum, a); }
Var dot(Var a, Var b) { return binary(Op::Dot, a, b); }
Var norm(Var a) { return unary(Op::Norm, a); }
Var cosine(Var a, Var b) { return binary(Op::Cosine, a, b); }
Var logsumexp_rows(Var a) { return unary(Op::LogSumExpRows, a); }
Var softmax_rows(Var a, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmax_rows: temperature must be > 0");
  return unary(Op::SoftmaxRows, a, temperature);
}
Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  return parts.front().tape()->record(Op::ConcatRows, parts);
}

Var add_scalar(Var a, double c) {
  return a + a.tape()->constant(Matrix(a.rows(), a.cols(), c));
}

Var broadcast_rows(Var row, std::size_t n) {
  if (row.rows() != 1) throw DimensionError("broadcast_rows: expected a 1xc row");
  return matmul(row.tape()->constant(Matrix(n, 1, 1.0)), row);
}

Var broadcast_cols(Var col, std::size_t n) {
  if (col.cols() != 1) throw DimensionError("broadcast_cols: expected an rx1 column");
  return matmul(col, col.tape()->constant(Matrix(1, n, 1.0)));
}

Var log_softmax_rows(Var a) { return a - broadcast_cols(logsumexp_rows(a), a.cols()); }

Var add_row(Var a, Var b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw DimensionError("add_row: bias shape mismatch");
  return a + broadcast_rows(b, a.rows());
}

GradResult grad(const LossBuilder& builder, const NamedInputs& inputs) {
  Tape tape;
  LeafMap leaves;
  for (const auto& [name, m] : inputs) leaves.emplace(name, tape.leaf(name, m));
  const Var out = builder(tape, leaves);
  GradResult result;
  result.value = out.value().scalar();
  result.gradients = tape.gradients(out);
  return result;
}

double evaluate(const LossBuilder& builder, const NamedInputs& inputs) {
  Tape tape;
  LeafMap leaves;
  for (const auto& [name, m] : inputs) leaves.emplace(name, tape.constant(m));
  return builder(tape, leaves).value().scalar();
}

GradientSet finite_diff(const LossBuilder& builder, const NamedInputs& inputs, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff: step must be > 0");
  NamedInputs probe = inputs;
  GradientSet out;
  for (const auto& [name, m] : inputs) {
    Matrix g(m.rows(), m.cols());
    Matrix& x = probe.at(name);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = x[i];
      double plus = 0.0;
      double minus = 0.0;
      try {
        x[i] = orig + h;
        plus = evaluate(builder, probe);
        x[i] = orig - h;
        minus = evaluate(builder, probe);
      } catch (const EvaluationError&) {
        plus = std::numeric_limits<double>::quiet_NaN();
      }
      x[i] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw EvaluationError("finite_diff: non-finite loss probing '" + name + "' coordinate " +
                                  std::to_string(i),
                              static_cast<std::ptrdiff_t>(i));
      }
      g[i] = (plus - minus) / (2.0 * h);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double max_relative_error(const GradientSet& analytic, const GradientSet& numeric, double floor) {
  double worst = 0.0;
  for (const auto& [name, a] : analytic) {
    const Matrix& b = numeric.at(name);
    if (!a.same_shape(b)) throw DimensionError("max_relative_error: shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double err = std::abs(a[i] - b[i]) / std::max(std::abs(a[i]), floor);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace lab::ad
