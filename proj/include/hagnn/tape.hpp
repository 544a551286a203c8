#pragma once

// Tape-based reverse-mode automatic differentiation over rank-2 tensors.
//
// Every differentiable operation appends one node to the tape; backward() runs
// a single reverse sweep from a scalar loss and accumulates vector-Jacobian
// products into the leaves. The op set is deliberately small and closed; the
// models are built from these primitives plus compositions (sub, concat_cols,
// clamp, rsqrt) that expand into them.
//
// Non-finite outputs raise NumericError at the op that produced them. The
// check runs per op and can be disabled by setting HAGNN_PROFILE=release.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "hagnn/errors.hpp"
#include "hagnn/tensor.hpp"

namespace hagnn {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMat>;
using EigenConstMap = Eigen::Map<const EigenRowMat>;

inline EigenConstMap emap(const Tensor& t) {
  return EigenConstMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                       static_cast<Eigen::Index>(t.cols()));
}

inline EigenMap emap(Tensor& t) {
  return EigenMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kMul,
  kScalarMul,
  kPowScalar,
  kConcatRows,
  kSlice,
  kSum,
  kMeanRows,
  kSigmoid,
  kTanh,
  kRelu,
  kLog,
  kSoftmaxRows,
  kGatherRows,
  kScatterMean,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kPowScalar: return "pow_scalar";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSlice: return "slice";
    case Op::kSum: return "sum";
    case Op::kMeanRows: return "mean_rows";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kLog: return "log";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterMean: return "scatter_mean";
  }
  return "?";
}

// Handle into a tape. Cheap to copy; invalidated by Tape::reset().
struct Var {
  std::uint32_t id = 0;
};

class Tape {
 public:
  Tape() : check_finite_(default_check_finite()) {}

  // When false, per-op non-finite screening is skipped. Domain checks on
  // log and fractional powers stay on regardless.
  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite_enabled() const { return check_finite_; }

  std::size_t num_nodes() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  // ---- graph inputs ----

  Var leaf(const Tensor& value, bool needs_grad = true) {
    return push(needs_grad ? Op::kLeaf : Op::kConstant, {}, Tensor(value),
                needs_grad);
  }

  Var constant(const Tensor& value) { return leaf(value, false); }

  // ---- primitive ops ----

  Var matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.cols() != tb.rows())
      throw DimensionError("matmul: inner dimensions differ (" +
                           shape_str(ta) + " vs " + shape_str(tb) + ")");
    Tensor out(ta.rows(), tb.cols());
    emap(out).noalias() = emap(ta) * emap(tb);
    return push(Op::kMatMul, {a, b}, std::move(out));
  }

  // Elementwise add; b may also be a single row broadcast down a.
  Var add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Tensor out(ta.rows(), ta.cols());
    if (ta.same_shape(tb)) {
      for (std::size_t k = 0; k < ta.size(); ++k) out[k] = ta[k] + tb[k];
    } else if (tb.rows() == 1 && tb.cols() == ta.cols()) {
      for (std::size_t i = 0; i < ta.rows(); ++i)
        for (std::size_t j = 0; j < ta.cols(); ++j)
          out[i * ta.cols() + j] = ta[i * ta.cols() + j] + tb[j];
    } else {
      throw DimensionError("add: shapes incompatible (" + shape_str(ta) +
                           " vs " + shape_str(tb) + ")");
    }
    return push(Op::kAdd, {a, b}, std::move(out));
  }

  // Elementwise product; b may also be a single row broadcast down a.
  Var mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Tensor out(ta.rows(), ta.cols());
    if (ta.same_shape(tb)) {
      for (std::size_t k = 0; k < ta.size(); ++k) out[k] = ta[k] * tb[k];
    } else if (tb.rows() == 1 && tb.cols() == ta.cols()) {
      for (std::size_t i = 0; i < ta.rows(); ++i)
        for (std::size_t j = 0; j < ta.cols(); ++j)
          out[i * ta.cols() + j] = ta[i * ta.cols() + j] * tb[j];
    } else {
      throw DimensionError("mul: shapes incompatible (" + shape_str(ta) +
                           " vs " + shape_str(tb) + ")");
    }
    return push(Op::kMul, {a, b}, std::move(out));
  }

  Var scalar_mul(Var a, double c) {
    const Tensor& ta = val(a);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t k = 0; k < ta.size(); ++k) out[k] = ta[k] * c;
    Var v = push(Op::kScalarMul, {a}, std::move(out));
    node(v).scalar = c;
    return v;
  }

  // Elementwise a^p for a real exponent. Inputs must be strictly positive
  // unless p is a non-negative integer.
  Var pow_scalar(Var a, double p) {
    const Tensor& ta = val(a);
    bool integer_p = p >= 0.0 && p == std::floor(p);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t k = 0; k < ta.size(); ++k) {
      if (!integer_p && ta[k] <= 0.0)
        throw NumericError("pow_scalar: non-positive base " +
                           std::to_string(ta[k]) + " with exponent " +
                           std::to_string(p));
      out[k] = std::pow(ta[k], p);
    }
    Var v = push(Op::kPowScalar, {a}, std::move(out));
    node(v).scalar = p;
    return v;
  }

  // Stacks inputs vertically; all must share a column count.
  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw PreconditionError("concat_rows: no inputs");
    std::size_t cols = val(parts[0]).cols();
    std::size_t rows = 0;
    for (Var p : parts) {
      if (val(p).cols() != cols)
        throw DimensionError("concat_rows: column counts differ");
      rows += val(p).rows();
    }
    Tensor out(rows, cols);
    std::size_t r = 0;
    for (Var p : parts) {
      const Tensor& tp = val(p);
      for (std::size_t i = 0; i < tp.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j)
          out.at(r + i, j) = tp.at(i, j);
      r += tp.rows();
    }
    return push(Op::kConcatRows, parts, std::move(out));
  }

  // Copies the half-open block [r0, r1) x [c0, c1).
  Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0,
            std::size_t c1) {
    const Tensor& ta = val(a);
    if (r1 > ta.rows() || c1 > ta.cols() || r0 >= r1 || c0 >= c1)
      throw DimensionError("slice: bounds [" + std::to_string(r0) + "," +
                           std::to_string(r1) + ")x[" + std::to_string(c0) +
                           "," + std::to_string(c1) + ") invalid for " +
                           shape_str(ta));
    Tensor out(r1 - r0, c1 - c0);
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = c0; j < c1; ++j) out.at(i - r0, j - c0) = ta.at(i, j);
    Var v = push(Op::kSlice, {a}, std::move(out));
    Node& n = node(v);
    n.r0 = r0;
    n.r1 = r1;
    n.c0 = c0;
    n.c1 = c1;
    return v;
  }

  // Sum of all elements, as a 1x1 tensor.
  Var sum(Var a) {
    const Tensor& ta = val(a);
    double acc = 0.0;
    for (std::size_t k = 0; k < ta.size(); ++k) acc += ta[k];
    return push(Op::kSum, {a}, Tensor::scalar(acc));
  }

  // Column means: [m x n] -> [1 x n].
  Var mean_rows(Var a) {
    const Tensor& ta = val(a);
    Tensor out(1, ta.cols());
    double inv = 1.0 / static_cast<double>(ta.rows());
    for (std::size_t j = 0; j < ta.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ta.rows(); ++i) acc += ta.at(i, j);
      out[j] = acc * inv;
    }
    return push(Op::kMeanRows, {a}, std::move(out));
  }

  Var sigmoid(Var a) {
    const Tensor& ta = val(a);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t k = 0; k < ta.size(); ++k) {
      double x = ta[k];
      // Split by sign to avoid overflowing exp.
      out[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
    }
    return push(Op::kSigmoid, {a}, std::move(out));
  }

  Var tanh(Var a) {
    const Tensor& ta = val(a);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t k = 0; k < ta.size(); ++k) out[k] = std::tanh(ta[k]);
    return push(Op::kTanh, {a}, std::move(out));
  }

  Var relu(Var a) {
    const Tensor& ta = val(a);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t k = 0; k < ta.size(); ++k)
      out[k] = ta[k] > 0.0 ? ta[k] : 0.0;
    return push(Op::kRelu, {a}, std::move(out));
  }

  // Natural log; every element must be strictly positive.
  Var log(Var a) {
    const Tensor& ta = val(a);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t k = 0; k < ta.size(); ++k) {
      if (ta[k] <= 0.0)
        throw NumericError("log: non-positive input " + std::to_string(ta[k]));
      out[k] = std::log(ta[k]);
    }
    return push(Op::kLog, {a}, std::move(out));
  }

  // Row-wise softmax, stabilized by subtracting each row's max.
  Var softmax_rows(Var a) {
    const Tensor& ta = val(a);
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t i = 0; i < ta.rows(); ++i) {
      double m = ta.at(i, 0);
      for (std::size_t j = 1; j < ta.cols(); ++j) m = std::max(m, ta.at(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < ta.cols(); ++j) {
        double e = std::exp(ta.at(i, j) - m);
        out.at(i, j) = e;
        z += e;
      }
      double inv = 1.0 / z;
      for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) *= inv;
    }
    return push(Op::kSoftmaxRows, {a}, std::move(out));
  }

  // Row selection by index; indices may repeat.
  Var gather_rows(Var a, std::vector<std::size_t> indices) {
    const Tensor& ta = val(a);
    if (indices.empty()) throw PreconditionError("gather_rows: empty index");
    for (std::size_t idx : indices)
      if (idx >= ta.rows())
        throw DimensionError("gather_rows: index " + std::to_string(idx) +
                             " out of range for " + shape_str(ta));
    Tensor out(indices.size(), ta.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t j = 0; j < ta.cols(); ++j)
        out.at(i, j) = ta.at(indices[i], j);
    Var v = push(Op::kGatherRows, {a}, std::move(out));
    node(v).indices =
        std::make_shared<const std::vector<std::size_t>>(std::move(indices));
    return v;
  }

  // Mean-aggregates rows of a into num_groups output rows; groups[i] names
  // the destination of row i. Every group must receive at least one row.
  Var scatter_mean(Var a, std::vector<std::size_t> groups,
                   std::size_t num_groups) {
    const Tensor& ta = val(a);
    if (groups.size() != ta.rows())
      throw DimensionError("scatter_mean: group list length " +
                           std::to_string(groups.size()) + " != rows " +
                           std::to_string(ta.rows()));
    if (num_groups == 0)
      throw PreconditionError("scatter_mean: num_groups must be positive");
    std::vector<std::size_t> count(num_groups, 0);
    for (std::size_t g : groups) {
      if (g >= num_groups)
        throw DimensionError("scatter_mean: group id " + std::to_string(g) +
                             " out of range");
      ++count[g];
    }
    for (std::size_t g = 0; g < num_groups; ++g)
      if (count[g] == 0)
        throw PreconditionError("scatter_mean: group " + std::to_string(g) +
                                " is empty");
    Tensor out(num_groups, ta.cols());
    for (std::size_t i = 0; i < ta.rows(); ++i)
      for (std::size_t j = 0; j < ta.cols(); ++j)
        out.at(groups[i], j) += ta.at(i, j);
    for (std::size_t g = 0; g < num_groups; ++g) {
      double inv = 1.0 / static_cast<double>(count[g]);
      for (std::size_t j = 0; j < ta.cols(); ++j) out.at(g, j) *= inv;
    }
    Var v = push(Op::kScatterMean, {a}, std::move(out));
    Node& n = node(v);
    n.indices =
        std::make_shared<const std::vector<std::size_t>>(std::move(groups));
    n.num_groups = num_groups;
    return v;
  }

  // ---- compositions (expand into the primitives above) ----

  Var neg(Var a) { return scalar_mul(a, -1.0); }

  Var sub(Var a, Var b) { return add(a, scalar_mul(b, -1.0)); }

  // a + c elementwise, via a constant filled to a's shape.
  Var add_scalar(Var a, double c) {
    const Tensor& ta = val(a);
    return add(a, constant(Tensor::full(1, ta.cols(), c)));
  }

  Var rsqrt(Var a) { return pow_scalar(a, -0.5); }

  // Horizontal concatenation [a | b] written as two selector matmuls, so it
  // stays inside the primitive set.
  Var concat_cols(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rows() != tb.rows())
      throw DimensionError("concat_cols: row counts differ");
    std::size_t ca = ta.cols();
    std::size_t cb = tb.cols();
    Tensor pa(ca, ca + cb);
    for (std::size_t j = 0; j < ca; ++j) pa.at(j, j) = 1.0;
    Tensor pb(cb, ca + cb);
    for (std::size_t j = 0; j < cb; ++j) pb.at(j, ca + j) = 1.0;
    return add(matmul(a, constant(pa)), matmul(b, constant(pb)));
  }

  // Elementwise clamp to [lo, hi]: max via lo + relu(x - lo), then min via
  // hi - relu(hi - y).
  Var clamp(Var a, double lo, double hi) {
    if (!(lo < hi)) throw PreconditionError("clamp: lo must be below hi");
    Var above = add_scalar(relu(add_scalar(a, -lo)), lo);
    return add_scalar(neg(relu(add_scalar(neg(above), hi))), hi);
  }

  // ---- reverse sweep ----

  // Runs one reverse accumulation from a scalar loss. A tape supports a
  // single backward; build a fresh tape (or reset) for the next step.
  void backward(Var loss) {
    if (backward_done_)
      throw StateError("backward: tape already swept; reset first");
    const Tensor& tl = val(loss);
    if (!tl.is_scalar())
      throw ContractError("backward: loss must be 1x1, got " + shape_str(tl));
    backward_done_ = true;
    for (Node& n : nodes_)
      if (n.needs_grad) n.grad = Tensor::zeros(n.val.rows(), n.val.cols());
    if (!node(loss).needs_grad) return;  // loss depends on no tracked leaf
    node(loss).grad[0] = 1.0;
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.op == Op::kLeaf || n.op == Op::kConstant) continue;
      propagate(n);
    }
  }

  bool backward_done() const { return backward_done_; }

  const Tensor& value(Var v) const { return val(v); }

  const Tensor& grad(Var v) const {
    if (!backward_done_) throw StateError("grad: backward has not run");
    const Node& n = cnode(v);
    if (!n.needs_grad)
      throw ContractError("grad: node does not track gradients");
    return n.grad;
  }

  // One line per node: id, op, shape, inputs. For debugging tapes.
  void dump(std::ostream& os) const {
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const Node& n = nodes_[id];
      os << id << "\t" << op_name(n.op) << "\t" << n.val.rows() << "x"
         << n.val.cols();
      if (!n.inputs.empty()) {
        os << "\t<-";
        for (std::uint32_t in : n.inputs) os << " " << in;
      }
      os << "\n";
    }
  }

 private:
  struct Node {
    Op op;
    std::vector<std::uint32_t> inputs;
    Tensor val;
    Tensor grad;  // allocated by backward() for tracked nodes
    bool needs_grad = false;
    double scalar = 0.0;                       // scalar_mul / pow_scalar
    std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // slice bounds
    std::shared_ptr<const std::vector<std::size_t>> indices;  // gather/scatter
    std::size_t num_groups = 0;
  };

  static bool default_check_finite() {
    const char* profile = std::getenv("HAGNN_PROFILE");
    return !(profile && std::string(profile) == "release");
  }

  static std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
  }

  Node& node(Var v) { return nodes_[v.id]; }
  const Node& cnode(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("stale Var handle");
    return nodes_[v.id];
  }
  const Tensor& val(Var v) const { return cnode(v).val; }

  Var push(Op op, const std::vector<Var>& inputs, Tensor&& value,
           bool leaf_needs_grad = false) {
    if (backward_done_)
      throw StateError("tape already swept; reset before building more ops");
    if (check_finite_ && !value.all_finite())
      throw NumericError(std::string(op_name(op)) + ": non-finite output");
    Node n;
    n.op = op;
    n.val = std::move(value);
    if (op == Op::kLeaf || op == Op::kConstant) {
      n.needs_grad = leaf_needs_grad;
    } else {
      for (Var in : inputs) {
        n.inputs.push_back(in.id);
        if (cnode(in).needs_grad) n.needs_grad = true;
      }
    }
    nodes_.push_back(std::move(n));
    std::size_t id = nodes_.size() - 1;
    if (id > UINT32_MAX) throw StateError("tape overflow");
    return Var{static_cast<std::uint32_t>(id)};
  }

  // Accumulates d(loss)/d(input) into each tracked input of n.
  void propagate(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kMatMul: {
        Node& a = nodes_[n.inputs[0]];
        Node& b = nodes_[n.inputs[1]];
        if (a.needs_grad)
          emap(a.grad).noalias() += emap(g) * emap(b.val).transpose();
        if (b.needs_grad)
          emap(b.grad).noalias() += emap(a.val).transpose() * emap(g);
        break;
      }
      case Op::kAdd: {
        Node& a = nodes_[n.inputs[0]];
        Node& b = nodes_[n.inputs[1]];
        if (a.needs_grad)
          for (std::size_t k = 0; k < g.size(); ++k) a.grad[k] += g[k];
        if (b.needs_grad) {
          if (b.val.same_shape(n.val)) {
            for (std::size_t k = 0; k < g.size(); ++k) b.grad[k] += g[k];
          } else {  // broadcast row: column sums
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < g.cols(); ++j)
                b.grad[j] += g.at(i, j);
          }
        }
        break;
      }
      case Op::kMul: {
        Node& a = nodes_[n.inputs[0]];
        Node& b = nodes_[n.inputs[1]];
        bool broadcast = !b.val.same_shape(a.val);
        if (a.needs_grad) {
          if (!broadcast) {
            for (std::size_t k = 0; k < g.size(); ++k)
              a.grad[k] += g[k] * b.val[k];
          } else {
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < g.cols(); ++j)
                a.grad.at(i, j) += g.at(i, j) * b.val[j];
          }
        }
        if (b.needs_grad) {
          if (!broadcast) {
            for (std::size_t k = 0; k < g.size(); ++k)
              b.grad[k] += g[k] * a.val[k];
          } else {
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < g.cols(); ++j)
                b.grad[j] += g.at(i, j) * a.val.at(i, j);
          }
        }
        break;
      }
      case Op::kScalarMul: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t k = 0; k < g.size(); ++k)
            a.grad[k] += g[k] * n.scalar;
        break;
      }
      case Op::kPowScalar: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad) {
          double p = n.scalar;
          for (std::size_t k = 0; k < g.size(); ++k)
            a.grad[k] += g[k] * p * std::pow(a.val[k], p - 1.0);
        }
        break;
      }
      case Op::kConcatRows: {
        std::size_t r = 0;
        for (std::uint32_t in : n.inputs) {
          Node& a = nodes_[in];
          if (a.needs_grad)
            for (std::size_t i = 0; i < a.val.rows(); ++i)
              for (std::size_t j = 0; j < g.cols(); ++j)
                a.grad.at(i, j) += g.at(r + i, j);
          r += a.val.rows();
        }
        break;
      }
      case Op::kSlice: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j)
              a.grad.at(n.r0 + i, n.c0 + j) += g.at(i, j);
        break;
      }
      case Op::kSum: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad) {
          double gv = g[0];
          for (std::size_t k = 0; k < a.grad.size(); ++k) a.grad[k] += gv;
        }
        break;
      }
      case Op::kMeanRows: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad) {
          double inv = 1.0 / static_cast<double>(a.val.rows());
          for (std::size_t i = 0; i < a.val.rows(); ++i)
            for (std::size_t j = 0; j < a.val.cols(); ++j)
              a.grad.at(i, j) += g[j] * inv;
        }
        break;
      }
      case Op::kSigmoid: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t k = 0; k < g.size(); ++k) {
            double y = n.val[k];
            a.grad[k] += g[k] * y * (1.0 - y);
          }
        break;
      }
      case Op::kTanh: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t k = 0; k < g.size(); ++k) {
            double y = n.val[k];
            a.grad[k] += g[k] * (1.0 - y * y);
          }
        break;
      }
      case Op::kRelu: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t k = 0; k < g.size(); ++k)
            if (a.val[k] > 0.0) a.grad[k] += g[k];
        break;
      }
      case Op::kLog: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t k = 0; k < g.size(); ++k)
            a.grad[k] += g[k] / a.val[k];
        break;
      }
      case Op::kSoftmaxRows: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad)
          for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j)
              dot += g.at(i, j) * n.val.at(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j)
              a.grad.at(i, j) += n.val.at(i, j) * (g.at(i, j) - dot);
          }
        break;
      }
      case Op::kGatherRows: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad) {
          const auto& idx = *n.indices;
          for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j)
              a.grad.at(idx[i], j) += g.at(i, j);
        }
        break;
      }
      case Op::kScatterMean: {
        Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad) {
          const auto& grp = *n.indices;
          std::vector<double> inv(n.num_groups, 0.0);
          for (std::size_t g_id : grp) inv[g_id] += 1.0;
          for (std::size_t g_id = 0; g_id < n.num_groups; ++g_id)
            inv[g_id] = 1.0 / inv[g_id];
          for (std::size_t i = 0; i < grp.size(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j)
              a.grad.at(i, j) += g.at(grp[i], j) * inv[grp[i]];
        }
        break;
      }
      case Op::kLeaf:
      case Op::kConstant:
        break;
    }
  }

  std::vector<Node> nodes_;
  bool check_finite_ = true;
  bool backward_done_ = false;
};

}  // namespace hagnn
