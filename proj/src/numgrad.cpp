#include "seqrl/numgrad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "seqrl/errors.hpp"
#include "kernels.hpp"

namespace seqrl::ng {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
  if (shape.size() > 2) {
    throw DimensionError("tensor rank > 2 not supported: " + shape_str(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
}

Tensor Tensor::zeros(Shape s, bool rg) {
  auto n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0), rg);
}

Tensor Tensor::scalar(double value, bool rg) { return Tensor({}, {value}, rg); }

std::size_t Tensor::rows() const { return shape.size() == 2 ? shape[0] : 1; }

std::size_t Tensor::cols() const {
  if (shape.empty()) return 1;
  return shape.back();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::add_row: return "add_row";
    case OpKind::scale: return "scale";
    case OpKind::softmax_row: return "softmax_row";
    case OpKind::log_softmax_row: return "log_softmax_row";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::reshape: return "reshape";
    case OpKind::pick: return "pick";
    case OpKind::sum: return "sum";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!tape_) throw StateError("use of an unbound Var");
  return tape_->value(*this);
}

double Var::item() const {
  const auto& t = value();
  if (t.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(t.shape));
  }
  return t.values[0];
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor tensor) {
  tensor.grad.reset();
  bool rg = tensor.requires_grad;
  tensors_.push_back(std::move(tensor));
  TapeNode node;
  node.kind = OpKind::leaf;
  node.needs_grad = rg;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor tensor) {
  tensor.requires_grad = false;
  return leaf(std::move(tensor));
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw StateError("Var does not belong to this tape");
  }
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return tensors_[v.id_];
}

const TapeNode& Tape::node(Var v) const {
  check_owner(v);
  return nodes_[v.id_];
}

bool Tape::has_grad(Var v) const {
  check_owner(v);
  return tensors_[v.id_].grad.has_value();
}

const std::vector<double>& Tape::grad(Var v) const {
  check_owner(v);
  const auto& g = tensors_[v.id_].grad;
  if (!g) {
    throw StateError(std::string("no gradient recorded for ") +
                     op_name(nodes_[v.id_].kind) + " node " +
                     std::to_string(v.id_));
  }
  return *g;
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Tensor out,
                 std::vector<std::size_t> indices, double scalar) {
  if (backward_done_) {
    throw StateError("tape already differentiated; reset() before recording");
  }
  TapeNode node;
  node.kind = kind;
  node.indices = std::move(indices);
  node.scalar = scalar;
  for (auto id : inputs) node.needs_grad = node.needs_grad || nodes_[id].needs_grad;
  node.inputs = std::move(inputs);
  out.requires_grad = node.needs_grad;
  out.grad.reset();
  tensors_.push_back(std::move(out));
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_slot(std::size_t id) {
  auto& g = tensors_[id].grad;
  if (!g) g.emplace(tensors_[id].size(), 0.0);
  return *g;
}

void Tape::reset() {
  tensors_.clear();
  nodes_.clear();
  backward_done_ = false;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (backward_done_) {
    throw StateError("backward() already ran on this tape");
  }
  const auto& lt = tensors_[loss.id_];
  if (lt.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(lt.shape));
  }
  backward_done_ = true;
  if (!nodes_[loss.id_].needs_grad) return;
  grad_slot(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    if (!nodes_[id].needs_grad || !tensors_[id].grad) continue;
    backward_node(id);
  }
}

void Tape::backward_node(std::size_t id) {
  const TapeNode& node = nodes_[id];
  const Tensor& out = tensors_[id];
  const std::vector<double>& g = *out.grad;

  auto want = [&](std::size_t k) { return nodes_[node.inputs[k]].needs_grad; };
  auto in = [&](std::size_t k) -> const Tensor& { return tensors_[node.inputs[k]]; };

  switch (node.kind) {
    case OpKind::leaf:
      return;

    case OpKind::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      if (want(0)) {
        detail::gemm_acc_bt(grad_slot(node.inputs[0]).data(), g.data(), b.values.data(), m, k, n);
      }
      if (want(1)) {
        detail::gemm_acc_at(grad_slot(node.inputs[1]).data(), a.values.data(), g.data(), m, k, n);
      }
      return;
    }

    case OpKind::add: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!want(k)) continue;
        auto& gi = grad_slot(node.inputs[k]);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      return;
    }

    case OpKind::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (want(0)) {
        auto& ga = grad_slot(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.values[i];
      }
      if (want(1)) {
        auto& gb = grad_slot(node.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.values[i];
      }
      return;
    }

    case OpKind::tanh: {
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = out.values[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
      return;
    }

    case OpKind::sigmoid: {
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = out.values[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
      return;
    }

    case OpKind::leaky_relu: {
      const Tensor& a = in(0);
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += a.values[i] > 0.0 ? g[i] : node.scalar * g[i];
      }
      return;
    }

    case OpKind::add_row: {
      std::size_t c = out.cols(), r = out.rows();
      if (want(0)) {
        auto& ga = grad_slot(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (want(1)) {
        auto& gr = grad_slot(node.inputs[1]);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
        }
      }
      return;
    }

    case OpKind::scale: {
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += node.scalar * g[i];
      return;
    }

    case OpKind::softmax_row: {
      std::size_t c = out.cols(), r = out.rows();
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = &out.values[i * c];
        const double* gi = &g[i * c];
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gi[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[j] * (gi[j] - dot);
      }
      return;
    }

    case OpKind::log_softmax_row: {
      std::size_t c = out.cols(), r = out.rows();
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = &out.values[i * c];
        const double* gi = &g[i * c];
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += gi[j];
        for (std::size_t j = 0; j < c; ++j) {
          ga[i * c + j] += gi[j] - std::exp(y[j]) * total;
        }
      }
      return;
    }

    case OpKind::gather_rows: {
      std::size_t c = out.cols();
      auto& gt = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < node.indices.size(); ++i) {
        std::size_t row = node.indices[i];
        for (std::size_t j = 0; j < c; ++j) gt[row * c + j] += g[i * c + j];
      }
      return;
    }

    case OpKind::concat_cols: {
      std::size_t r = out.rows(), c = out.cols();
      std::size_t ca = in(0).cols(), cb = in(1).cols();
      if (want(0)) {
        auto& ga = grad_slot(node.inputs[0]);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
        }
      }
      if (want(1)) {
        auto& gb = grad_slot(node.inputs[1]);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
        }
      }
      return;
    }

    case OpKind::slice_cols: {
      std::size_t r = out.rows(), c = out.cols();
      std::size_t start = node.indices[0];
      std::size_t ca = in(0).cols();
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[i * ca + start + j] += g[i * c + j];
      }
      return;
    }

    case OpKind::stack_rows: {
      std::size_t c = out.cols();
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (!want(k)) continue;
        auto& gk = grad_slot(node.inputs[k]);
        for (std::size_t j = 0; j < c; ++j) gk[j] += g[k * c + j];
      }
      return;
    }

    case OpKind::reshape: {
      auto& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      return;
    }

    case OpKind::pick: {
      auto& ga = grad_slot(node.inputs[0]);
      ga[node.indices[0]] += g[0];
      return;
    }

    case OpKind::sum: {
      auto& ga = grad_slot(node.inputs[0]);
      for (auto& v : ga) v += g[0];
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& owner(Var a) {
  if (!a.valid()) throw StateError("use of an unbound Var");
  return *a.tape();
}

Tape& owner(Var a, Var b) {
  Tape& t = owner(a);
  if (b.tape() != &t) throw ContractError("operands recorded on different tapes");
  return t;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

template <typename F>
Var unary(OpKind kind, Var a, F f, double scalar = 0.0) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x.values[i]);
  return t.record(kind, {a.id()}, Tensor(x.shape, std::move(out)), {}, scalar);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = owner(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  if (y.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(x.shape) +
                         " x " + shape_str(y.shape));
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(out.data(), x.values.data(), y.values.data(), m, k, n);
  return t.record(OpKind::matmul, {a.id(), b.id()},
                  Tensor(matrix_shape(m, n), std::move(out)));
}

Var elementwise(Elementwise kind, Var a, std::optional<Var> b) {
  bool binary = kind == Elementwise::add || kind == Elementwise::mul;
  if (binary != b.has_value()) {
    throw ContractError(binary ? "binary elementwise op needs two operands"
                               : "unary elementwise op takes one operand");
  }
  switch (kind) {
    case Elementwise::add: return add(a, *b);
    case Elementwise::mul: return mul(a, *b);
    case Elementwise::tanh: return tanh(a);
    case Elementwise::sigmoid: return sigmoid(a);
    case Elementwise::leaky_relu: return leaky_relu(a);
  }
  throw ContractError("unknown elementwise kind");
}

Var add(Var a, Var b) {
  Tape& t = owner(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("add", x, y);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values[i] + y.values[i];
  return t.record(OpKind::add, {a.id(), b.id()}, Tensor(x.shape, std::move(out)));
}

Var mul(Var a, Var b) {
  Tape& t = owner(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("mul", x, y);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values[i] * y.values[i];
  return t.record(OpKind::mul, {a.id(), b.id()}, Tensor(x.shape, std::move(out)));
}

Var tanh(Var a) {
  return unary(OpKind::tanh, a, [](double v) { return std::tanh(v); });
}

Var sigmoid(Var a) {
  // Split on sign so exp() never overflows.
  return unary(OpKind::sigmoid, a, [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      OpKind::leaky_relu, a, [slope](double v) { return v > 0.0 ? v : slope * v; },
      slope);
}

Var add_row(Var a, Var row) {
  Tape& t = owner(a, row);
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw DimensionError("add_row: row " + shape_str(r.shape) + " does not fit " +
                         shape_str(x.shape));
  }
  std::size_t c = x.cols();
  std::vector<double> out(x.values);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += r.values[j];
  }
  return t.record(OpKind::add_row, {a.id(), row.id()}, Tensor(x.shape, std::move(out)));
}

Var scale(Var a, double factor) {
  return unary(OpKind::scale, a, [factor](double v) { return factor * v; }, factor);
}

Var softmax_row(Var a) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = &x.values[i * c];
    double mx = *std::max_element(xi, xi + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(xi[j] - mx);
      total += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  return t.record(OpKind::softmax_row, {a.id()}, Tensor(x.shape, std::move(out)));
}

Var log_softmax_row(Var a) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = &x.values[i * c];
    double mx = *std::max_element(xi, xi + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(xi[j] - mx);
    double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xi[j] - lse;
  }
  return t.record(OpKind::log_softmax_row, {a.id()}, Tensor(x.shape, std::move(out)));
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& t = owner(table);
  const Tensor& x = table.value();
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out;
  out.reserve(ids.size() * c);
  for (auto id : ids) {
    if (id >= r) {
      throw IndexError("gather_rows: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(r) + ")");
    }
    out.insert(out.end(), x.values.begin() + id * c, x.values.begin() + (id + 1) * c);
  }
  return t.record(OpKind::gather_rows, {table.id()},
                  Tensor(matrix_shape(ids.size(), c), std::move(out)),
                  std::vector<std::size_t>(ids.begin(), ids.end()));
}

Var concat_cols(Var a, Var b) {
  Tape& t = owner(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + shape_str(x.shape) +
                         " vs " + shape_str(y.shape));
  }
  std::size_t r = x.rows(), ca = x.cols(), cb = y.cols();
  std::vector<double> out;
  out.reserve(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    out.insert(out.end(), x.values.begin() + i * ca, x.values.begin() + (i + 1) * ca);
    out.insert(out.end(), y.values.begin() + i * cb, y.values.begin() + (i + 1) * cb);
  }
  return t.record(OpKind::concat_cols, {a.id(), b.id()},
                  Tensor(matrix_shape(r, ca + cb), std::move(out)));
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || start + count > c) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         shape_str(x.shape));
  }
  std::vector<double> out;
  out.reserve(r * count);
  for (std::size_t i = 0; i < r; ++i) {
    auto row = x.values.begin() + i * c + start;
    out.insert(out.end(), row, row + count);
  }
  return t.record(OpKind::slice_cols, {a.id()},
                  Tensor(matrix_shape(r, count), std::move(out)), {start});
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  Tape& t = owner(rows[0]);
  std::size_t c = rows[0].value().size();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  for (const auto& v : rows) {
    owner(rows[0], v);
    const Tensor& x = v.value();
    if (x.rows() != 1 || x.size() != c) {
      throw DimensionError("stack_rows: expected a row of " + std::to_string(c) +
                           " values, got " + shape_str(x.shape));
    }
    out.insert(out.end(), x.values.begin(), x.values.end());
    ids.push_back(v.id());
  }
  return t.record(OpKind::stack_rows, std::move(ids),
                  Tensor(matrix_shape(rows.size(), c), std::move(out)));
}

Var reshape(Var a, Shape shape) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape) + " to " + shape_str(shape));
  }
  return t.record(OpKind::reshape, {a.id()}, Tensor(std::move(shape), x.values));
}

Var pick(Var a, std::size_t position) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  if (position >= x.size()) {
    throw IndexError("pick: position " + std::to_string(position) + " outside " +
                     shape_str(x.shape));
  }
  return t.record(OpKind::pick, {a.id()}, Tensor::scalar(x.values[position]),
                  {position});
}

Var sum(Var a) {
  Tape& t = owner(a);
  const Tensor& x = a.value();
  double total = 0.0;
  for (double v : x.values) total += v;
  return t.record(OpKind::sum, {a.id()}, Tensor::scalar(total));
}

}  // namespace seqrl::ng
