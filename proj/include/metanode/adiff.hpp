#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace metanode::adiff {

/// Row-major tensor shape. Vectors are columns (cols == 1); scalars are 1x1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// The closed set of recordable operations.
enum class OpKind : std::uint8_t {
  leaf,
  matmul,      // A(m x k) * B(k x n)
  add,         // elementwise, equal shapes
  scalar_mul,  // constant * x
  tanh,
  sum,         // -> 1x1
  square,      // x * x elementwise
  min_zero,    // min(0, x) elementwise
  mean,        // -> 1x1
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  std::size_t index() const { return index_; }
  const Tape* tape() const { return tape_; }
  Shape shape() const;
  bool requires_grad() const;

  /// Forward value. The span is invalidated by the next record on the tape.
  std::span<const double> value() const;
  double scalar() const;

 private:
  friend class Tape;
  Var(const Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Adjoints produced by Tape::backward, addressed by the Var they belong to.
class Gradients {
 public:
  /// Gradient of the root w.r.t. `v`. All zeros when `v` does not require
  /// gradients or does not influence the root.
  std::span<const double> wrt(Var v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<double> adjoint_;
};

/// Append-only record of elementary operations. Operand indices of a node are
/// always strictly smaller than the node's own index, so the nodes form a DAG
/// in topological order and backward is a single reverse sweep.
///
/// A tape is single-threaded; use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(std::span<const double> value, Shape shape, bool requires_grad);
  Var variable(std::span<const double> value) {
    return leaf(value, {value.size(), 1}, true);
  }
  Var constant(std::span<const double> value) {
    return leaf(value, {value.size(), 1}, false);
  }

  /// Records `kind` applied to `operands`. `scalar` is the constant factor of
  /// scalar_mul and ignored otherwise. Throws ShapeError on nonconforming
  /// operands.
  Var record(OpKind kind, std::span<const Var> operands, double scalar = 1.0);

  /// Reverse sweep from a 1x1 root. Throws ShapeError for any other shape.
  Gradients backward(Var root) const;

  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t nodes, std::size_t values);

  Shape shape(std::size_t index) const { return nodes_[index].shape; }
  bool requires_grad(std::size_t index) const { return nodes_[index].requires_grad; }
  std::span<const double> value(std::size_t index) const {
    const Node& n = nodes_[index];
    return {values_.data() + n.offset, n.shape.size()};
  }

 private:
  friend class Gradients;

  struct Node {
    OpKind kind = OpKind::leaf;
    std::uint8_t arity = 0;
    bool requires_grad = false;
    std::size_t operands[2] = {0, 0};
    double scalar = 0.0;
    Shape shape;
    std::size_t offset = 0;
  };

  std::size_t push(OpKind kind, Shape shape, bool requires_grad);
  void check_owner(const Var& v) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
};

// Convenience wrappers over Tape::record.
Var matmul(Tape& tape, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, double c, Var x);
Var tanh(Tape& tape, Var x);
Var sum(Tape& tape, Var x);
Var square(Tape& tape, Var x);
Var min_zero(Tape& tape, Var x);
Var mean(Tape& tape, Var x);

/// (1/n) * sum_i min(0, v_i)^2, the negative-value penalty. Throws ShapeError
/// for an empty tensor.
Var min_zero_square_mean(Tape& tape, Var v);

}  // namespace metanode::adiff
