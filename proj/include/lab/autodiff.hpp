#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lab/matrix.hpp"

namespace lab::ad {

/// Primitive operations the tape knows how to differentiate.
enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Subtract,
  Multiply,  // elementwise
  Scale,     // by a scalar parameter
  MatMul,
  Transpose,
  Exp,
  Log,
  Tanh,
  Sum,
  Dot,
  Norm,
  Cosine,  // pairwise row cosines, fused backward rule
  LogSumExpRows,
  SoftmaxRows,  // temperature in the scalar parameter
  ConcatRows,
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode record. Nodes are appended in evaluation order, so every node
/// only references earlier nodes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Named differentiable input.
  Var leaf(const std::string& name, Matrix value);
  /// Non-differentiable value (data, masks, broadcasting helpers).
  Var constant(Matrix value);

  /// Dispatch a primitive by registered name; unknown names throw
  /// UnsupportedOperationError.
  Var apply(std::string_view op, std::span<const Var> args, double param = 0.0);

  Var record(Op op, std::span<const Var> args, double param = 0.0);

  const Matrix& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::map<std::string, std::size_t>& inputs() const noexcept { return inputs_; }

  /// d(output)/d(leaf) for every named leaf. `output` must be 1x1.
  std::map<std::string, Matrix> gradients(Var output) const;

  /// Recompute every node from the stored leaves and constants and return the
  /// value of `output`.
  Matrix replay(Var output) const;

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> parents;
    double param = 0.0;
    bool needs_grad = false;
    Matrix value;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> inputs_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product.
Var operator*(Var a, Var b);
Var operator*(double s, Var a);
Var scale(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sum(Var a);
Var dot(Var a, Var b);
Var norm(Var a);
Var cosine(Var a, Var b);
Var logsumexp_rows(Var a);
Var softmax_rows(Var a, double temperature);
Var concat_rows(std::span<const Var> parts);

// Compositions of the primitives above.
Var add_scalar(Var a, double c);
/// Repeat a 1xc row n times.
Var broadcast_rows(Var row, std::size_t n);
/// Repeat an rx1 column n times.
Var broadcast_cols(Var col, std::size_t n);
Var log_softmax_rows(Var a);
/// a + b where b is 1 x a.cols().
Var add_row(Var a, Var b);

using NamedInputs = std::map<std::string, Matrix>;
using LeafMap = std::map<std::string, Var>;
using GradientSet = std::map<std::string, Matrix>;
using LossBuilder = std::function<Var(Tape&, const LeafMap&)>;

struct GradResult {
  double value = 0.0;
  GradientSet gradients;
};

/// Loss value and analytic gradients with respect to every named input.
GradResult grad(const LossBuilder& builder, const NamedInputs& inputs);

/// Loss value only.
double evaluate(const LossBuilder& builder, const NamedInputs& inputs);

/// Central differences (L(x+h) - L(x-h)) / 2h for each coordinate of each
/// named input. Throws EvaluationError (with the flat coordinate index) when a
/// probe point yields a non-finite loss.
GradientSet finite_diff(const LossBuilder& builder, const NamedInputs& inputs, double h = 1e-5);

/// max over coordinates of |a - b| / max(|a|, floor).
double max_relative_error(const GradientSet& analytic, const GradientSet& numeric,
                          double floor = 1e-8);

}  // namespace lab::ad
