#pragma once

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Tape owns every tensor produced during a forward pass. Var is a cheap
// handle (tape pointer + node id). Operations append a node; backward() walks
// the nodes in exact reverse creation order and accumulates gradients into
// every node that transitively depends on a requires_grad leaf.
//
// Tensors are at most rank 2. A rank-1 tensor of length n behaves as a 1 x n
// row and a rank-0 tensor as 1 x 1 wherever a matrix view is needed. There is
// no implicit broadcasting: add_row() is the only broadcast and is explicit.

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqrl::ng {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  std::size_t size() const { return values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

enum class OpKind {
  leaf,
  matmul,
  add,
  mul,
  tanh,
  sigmoid,
  leaky_relu,
  add_row,
  scale,
  softmax_row,
  log_softmax_row,
  gather_rows,
  concat_cols,
  slice_cols,
  stack_rows,
  reshape,
  pick,
  sum,
};

const char* op_name(OpKind kind);

struct TapeNode {
  OpKind kind = OpKind::leaf;
  std::vector<std::size_t> inputs;
  // gather ids, pick position, or slice start depending on kind
  std::vector<std::size_t> indices;
  // scale factor or leaky slope
  double scalar = 0.0;
  bool needs_grad = false;
};

class Tape;

class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  // Convenience for rank-0 / single-element results.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf keeps the tensor's requires_grad flag; constant clears it.
  Var leaf(Tensor tensor);
  Var constant(Tensor tensor);

  const Tensor& value(Var v) const;
  const TapeNode& node(Var v) const;
  bool has_grad(Var v) const;
  // Gradient of the last backward() with respect to v. StateError when v
  // received none.
  const std::vector<double>& grad(Var v) const;

  // Populates grads of every requires_grad node reachable from the scalar
  // loss. A second call without reset() is a StateError.
  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  // Drops all nodes so the tape can record a new graph.
  void reset();
  std::size_t size() const { return nodes_.size(); }

  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor out,
             std::vector<std::size_t> indices = {}, double scalar = 0.0);

 private:
  void check_owner(Var v) const;
  void backward_node(std::size_t id);
  std::vector<double>& grad_slot(std::size_t id);

  std::deque<Tensor> tensors_;
  std::vector<TapeNode> nodes_;
  bool backward_done_ = false;
};

enum class Elementwise { add, mul, tanh, sigmoid, leaky_relu };

inline constexpr double kLeakySlope = 0.01;

Var matmul(Var a, Var b);
Var elementwise(Elementwise kind, Var a, std::optional<Var> b = std::nullopt);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope = kLeakySlope);
// a[r×c] + row[1×c] added to every row.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
// Row-wise over a matrix; a rank-1 input is a single row.
Var softmax_row(Var a);
Var log_softmax_row(Var a);
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t start, std::size_t count);
// Each input is one row of the result; all must have the same column count.
Var stack_rows(std::span<const Var> rows);
Var reshape(Var a, Shape shape);
// Rank-0 view of a single element at flat position.
Var pick(Var a, std::size_t position);
Var sum(Var a);

}  // namespace seqrl::ng
