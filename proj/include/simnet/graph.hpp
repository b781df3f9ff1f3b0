#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "simnet/tensor.hpp"

namespace simnet {

/// A learned tensor with its gradient accumulator. `writes` counts optimizer
/// updates so tied storage can be audited.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  bool frozen = false;
  std::uint64_t writes = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

enum class OpKind {
  leaf,
  matmul,
  add,
  add_broadcast_col,
  elementwise_mul,
  tanh,
  sigmoid,
  softmax_axis,
  log_softmax,
  concat_rows,
  row_lookup,
  slice_rows,
  transpose,
  dot,
  scale,
};

const char* op_name(OpKind op);

/// Per-op settings: softmax axis, scale factor, lookup ids, slice range.
struct OpAttr {
  std::size_t axis = 0;
  double factor = 1.0;
  std::vector<std::size_t> indices;
  std::size_t begin = 0;
  std::size_t end = 0;
  /// row_lookup with a single id on a matrix yields a rank-1 row.
  bool squeeze = false;
};

using NodeId = std::size_t;

/// Append-only tape. Values are computed eagerly when a node is appended and
/// every input id is strictly smaller than the node id, so insertion order is
/// a topological order.
class Graph {
 public:
  NodeId constant(Tensor value);
  /// Leaf with a gradient slot that is not tied to a Parameter.
  NodeId variable(Tensor value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  NodeId parameter(Parameter& p);

  NodeId apply(OpKind op, std::span<const NodeId> inputs, const OpAttr& attr = {});
  NodeId apply(OpKind op, std::initializer_list<NodeId> inputs, const OpAttr& attr = {}) {
    return apply(op, std::span<const NodeId>(inputs.begin(), inputs.size()), attr);
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  /// Gradient of the last backward() target w.r.t. node `id`; empty if the
  /// node did not receive one.
  const std::vector<double>& grad(NodeId id) const { return nodes_.at(id).grad; }
  std::size_t size() const { return nodes_.size(); }
  OpKind op(NodeId id) const { return nodes_.at(id).op; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }

  /// Reverse-mode sweep from a scalar node. Gradients accumulate into every
  /// bound Parameter's `grad`.
  void backward(NodeId loss);

  /// Parameters bound to this graph, in first-use order.
  std::vector<Parameter*> bound_parameters() const;

 private:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<NodeId> inputs;
    OpAttr attr;
    Tensor value;
    std::vector<double> grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  NodeId push(Node node);
  void backprop_node(const Node& node);
  std::vector<double>& grad_slot(NodeId id);

  std::deque<Node> nodes_;  // stable references across appends
  std::unordered_map<const Parameter*, NodeId> param_nodes_;
};

/// Handle pairing a graph with a node id; the free functions below build
/// expressions with it.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const { return graph->value(id); }
  double scalar() const { return graph->value(id)[0]; }
};

Var constant(Graph& g, Tensor t);
Var param(Graph& g, Parameter& p);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_col(Var matrix, Var vec);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var a, std::size_t axis = 0);
Var log_softmax(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_rows(Var a, Var b);
Var row_lookup(Var table, std::vector<std::size_t> ids);
/// Single row of a matrix as a vector.
Var row(Var table, std::size_t id);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var transpose(Var a);
Var dot(Var a, Var b);
Var scale(Var a, double factor);

/// Builds a scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

/// Maximum over all entries of all `params` of
/// |analytic - central| / max(floor, |analytic| + |central|).
/// Entries far below `floor` are compared absolutely, since central
/// differences of a double loss carry roundoff near 1e-11.
/// Leaves parameter values unchanged and gradients zeroed.
double grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps = 1e-5,
                  double floor = 1e-6);

}  // namespace simnet
