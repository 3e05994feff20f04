#include "metanode/adiff.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "metanode/errors.hpp"

namespace metanode::adiff {

namespace {

std::string shape_str(Shape s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

[[noreturn]] void shape_mismatch(OpKind kind, std::span<const Shape> shapes) {
  std::ostringstream msg;
  msg << "adiff: shape mismatch in " << op_name(kind) << " (";
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i) msg << ", ";
    msg << shape_str(shapes[i]);
  }
  msg << ")";
  throw ShapeError(msg.str());
}

std::size_t arity_of(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return 0;
    case OpKind::matmul:
    case OpKind::add: return 2;
    default: return 1;
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::tanh: return "tanh";
    case OpKind::sum: return "sum";
    case OpKind::square: return "square";
    case OpKind::min_zero: return "min_zero";
    case OpKind::mean: return "mean";
  }
  return "unknown";
}

Shape Var::shape() const { return tape_->shape(index_); }
bool Var::requires_grad() const { return tape_->requires_grad(index_); }
std::span<const double> Var::value() const { return tape_->value(index_); }

double Var::scalar() const {
  if (!shape().is_scalar()) throw ShapeError("adiff: scalar() on " + shape_str(shape()));
  return value()[0];
}

std::span<const double> Gradients::wrt(Var v) const {
  const Tape::Node& n = tape_->nodes_[v.index()];
  return {adjoint_.data() + n.offset, n.shape.size()};
}

void Tape::reserve(std::size_t nodes, std::size_t values) {
  nodes_.reserve(nodes);
  values_.reserve(values);
}

std::size_t Tape::push(OpKind kind, Shape shape, bool requires_grad) {
  Node n;
  n.kind = kind;
  n.shape = shape;
  n.requires_grad = requires_grad;
  n.offset = values_.size();
  values_.resize(values_.size() + shape.size());
  nodes_.push_back(n);
  return nodes_.size() - 1;
}

void Tape::check_owner(const Var& v) const {
  if (v.tape() != this || v.index() >= nodes_.size())
    throw ShapeError("adiff: operand does not belong to this tape");
}

Var Tape::leaf(std::span<const double> value, Shape shape, bool requires_grad) {
  if (value.size() != shape.size())
    throw ShapeError("adiff: leaf value of length " + std::to_string(value.size()) +
                     " does not fill shape " + shape_str(shape));
  const std::size_t idx = push(OpKind::leaf, shape, requires_grad);
  std::copy(value.begin(), value.end(), values_.begin() + nodes_[idx].offset);
  return Var(this, idx);
}

Var Tape::record(OpKind kind, std::span<const Var> operands, double scalar) {
  const std::size_t arity = arity_of(kind);
  if (kind == OpKind::leaf || operands.size() != arity)
    throw ShapeError("adiff: " + std::string(op_name(kind)) + " expects " +
                     std::to_string(arity) + " operand(s), got " +
                     std::to_string(operands.size()));
  for (const Var& v : operands) check_owner(v);

  Shape in[2];
  for (std::size_t i = 0; i < arity; ++i) in[i] = nodes_[operands[i].index()].shape;

  Shape out;
  switch (kind) {
    case OpKind::matmul:
      if (in[0].cols != in[1].rows) shape_mismatch(kind, {in, 2});
      out = {in[0].rows, in[1].cols};
      break;
    case OpKind::add:
      if (!(in[0] == in[1])) shape_mismatch(kind, {in, 2});
      out = in[0];
      break;
    case OpKind::sum:
    case OpKind::mean:
      if (in[0].size() == 0) shape_mismatch(kind, {in, 1});
      out = {1, 1};
      break;
    default:
      out = in[0];
      break;
  }

  bool needs_grad = false;
  for (std::size_t i = 0; i < arity; ++i)
    needs_grad = needs_grad || nodes_[operands[i].index()].requires_grad;

  const std::size_t idx = push(kind, out, needs_grad);
  Node& node = nodes_[idx];
  node.arity = static_cast<std::uint8_t>(arity);
  node.scalar = scalar;
  for (std::size_t i = 0; i < arity; ++i) node.operands[i] = operands[i].index();

  // Pointers are taken after push() so the arena has already grown.
  double* y = values_.data() + node.offset;
  const double* a = values_.data() + nodes_[node.operands[0]].offset;
  const std::size_t n = in[0].size();
  switch (kind) {
    case OpKind::matmul: {
      const double* b = values_.data() + nodes_[node.operands[1]].offset;
      const std::size_t m = in[0].rows, k = in[0].cols, p = in[1].cols;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          double acc = 0.0;
          for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * p + j];
          y[i * p + j] = acc;
        }
      }
      break;
    }
    case OpKind::add: {
      const double* b = values_.data() + nodes_[node.operands[1]].offset;
      for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
      break;
    }
    case OpKind::scalar_mul:
      for (std::size_t i = 0; i < n; ++i) y[i] = scalar * a[i];
      break;
    case OpKind::tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(a[i]);
      break;
    case OpKind::sum:
    case OpKind::mean: {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += a[i];
      y[0] = kind == OpKind::mean ? acc / static_cast<double>(n) : acc;
      break;
    }
    case OpKind::square:
      for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * a[i];
      break;
    case OpKind::min_zero:
      for (std::size_t i = 0; i < n; ++i) y[i] = a[i] < 0.0 ? a[i] : 0.0;
      break;
    case OpKind::leaf:
      break;
  }
  return Var(this, idx);
}

Gradients Tape::backward(Var root) const {
  check_owner(root);
  const Node& r = nodes_[root.index()];
  if (!r.shape.is_scalar())
    throw ShapeError("adiff: backward needs a scalar root, got " + shape_str(r.shape));

  Gradients g;
  g.tape_ = this;
  g.adjoint_.assign(values_.size(), 0.0);
  g.adjoint_[r.offset] = 1.0;
  double* adj = g.adjoint_.data();
  const double* val = values_.data();

  for (std::size_t idx = root.index() + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    if (node.kind == OpKind::leaf || !node.requires_grad) continue;
    const double* dy = adj + node.offset;
    const double* y = val + node.offset;
    const Node& a_node = nodes_[node.operands[0]];
    double* da = adj + a_node.offset;
    const double* a = val + a_node.offset;
    const std::size_t n = a_node.shape.size();

    switch (node.kind) {
      case OpKind::matmul: {
        const Node& b_node = nodes_[node.operands[1]];
        double* db = adj + b_node.offset;
        const double* b = val + b_node.offset;
        const std::size_t m = a_node.shape.rows, k = a_node.shape.cols,
                          p = b_node.shape.cols;
        if (a_node.requires_grad) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              double acc = 0.0;
              for (std::size_t j = 0; j < p; ++j) acc += dy[i * p + j] * b[l * p + j];
              da[i * k + l] += acc;
            }
        }
        if (b_node.requires_grad) {
          for (std::size_t l = 0; l < k; ++l)
            for (std::size_t j = 0; j < p; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < m; ++i) acc += a[i * k + l] * dy[i * p + j];
              db[l * p + j] += acc;
            }
        }
        break;
      }
      case OpKind::add: {
        const Node& b_node = nodes_[node.operands[1]];
        if (a_node.requires_grad)
          for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
        if (b_node.requires_grad) {
          double* db = adj + b_node.offset;
          for (std::size_t i = 0; i < n; ++i) db[i] += dy[i];
        }
        break;
      }
      case OpKind::scalar_mul:
        for (std::size_t i = 0; i < n; ++i) da[i] += node.scalar * dy[i];
        break;
      case OpKind::tanh:
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
        break;
      case OpKind::sum:
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[0];
        break;
      case OpKind::mean: {
        const double s = dy[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) da[i] += s;
        break;
      }
      case OpKind::square:
        for (std::size_t i = 0; i < n; ++i) da[i] += 2.0 * a[i] * dy[i];
        break;
      case OpKind::min_zero:
        for (std::size_t i = 0; i < n; ++i)
          if (a[i] < 0.0) da[i] += dy[i];
        break;
      case OpKind::leaf:
        break;
    }
  }

  // Nodes that do not require gradients report zeros.
  for (const Node& node : nodes_)
    if (!node.requires_grad)
      std::fill_n(g.adjoint_.begin() + static_cast<std::ptrdiff_t>(node.offset),
                  node.shape.size(), 0.0);
  return g;
}

Var matmul(Tape& tape, Var a, Var b) {
  const Var ops[] = {a, b};
  return tape.record(OpKind::matmul, ops);
}
Var add(Tape& tape, Var a, Var b) {
  const Var ops[] = {a, b};
  return tape.record(OpKind::add, ops);
}
Var scale(Tape& tape, double c, Var x) {
  return tape.record(OpKind::scalar_mul, {&x, 1}, c);
}
Var tanh(Tape& tape, Var x) { return tape.record(OpKind::tanh, {&x, 1}); }
Var sum(Tape& tape, Var x) { return tape.record(OpKind::sum, {&x, 1}); }
Var square(Tape& tape, Var x) { return tape.record(OpKind::square, {&x, 1}); }
Var min_zero(Tape& tape, Var x) { return tape.record(OpKind::min_zero, {&x, 1}); }
Var mean(Tape& tape, Var x) { return tape.record(OpKind::mean, {&x, 1}); }

Var min_zero_square_mean(Tape& tape, Var v) {
  if (v.shape().size() == 0) throw ShapeError("adiff: min_zero_square_mean of an empty tensor");
  return mean(tape, square(tape, min_zero(tape, v)));
}

}  // namespace metanode::adiff
