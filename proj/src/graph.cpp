#include "simnet/graph.hpp"

#include <cassert>
#include <cmath>
#include <limits>

namespace simnet {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_broadcast_col: return "add_broadcast_col";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax_axis: return "softmax_axis";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::row_lookup: return "row_lookup";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::transpose: return "transpose";
    case OpKind::dot: return "dot";
    case OpKind::scale: return "scale";
  }
  return "?";
}

namespace {

[[noreturn]] void mismatch(OpKind op, const std::string& expected, const Shape& actual) {
  throw ShapeError(std::string(op_name(op)) + ": expected " + expected + ", got " +
                   shape_str(actual));
}

void expect_arity(OpKind op, std::span<const NodeId> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw std::invalid_argument(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
}

// Softmax over groups of `len` entries spaced `stride` apart.
template <typename F>
void for_each_softmax_group(const Tensor& t, std::size_t axis, F&& f) {
  if (t.rank() == 1) {
    f(0, 1, t.size());
    return;
  }
  const std::size_t rows = t.rows(), cols = t.cols();
  if (axis == 0) {
    for (std::size_t c = 0; c < cols; ++c) f(c, cols, rows);
  } else {
    for (std::size_t r = 0; r < rows; ++r) f(r * cols, 1, cols);
  }
}

Tensor forward(OpKind op, const std::vector<const Tensor*>& in, const OpAttr& attr) {
  switch (op) {
    case OpKind::leaf:
      break;
    case OpKind::matmul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2) mismatch(op, "rank-2 left operand", a.shape());
      if (a.cols() != b.rows()) {
        mismatch(op, "right operand with " + std::to_string(a.cols()) + " rows for left " +
                         shape_str(a.shape()),
                 b.shape());
      }
      const std::size_t n = a.rows(), inner = a.cols();
      if (b.rank() == 1) {
        Tensor out({n});
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          const double* row = &a.storage()[i * inner];
          for (std::size_t j = 0; j < inner; ++j) s += row[j] * b[j];
          out[i] = s;
        }
        return out;
      }
      const std::size_t m = b.cols();
      Tensor out({n, m});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < inner; ++j) {
          const double aij = a.at(i, j);
          if (aij == 0.0) continue;
          for (std::size_t c = 0; c < m; ++c) out.at(i, c) += aij * b.at(j, c);
        }
      return out;
    }
    case OpKind::add:
    case OpKind::elementwise_mul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      const bool is_add = op == OpKind::add;
      auto combine = [&](double x, double y) { return is_add ? x + y : x * y; };
      if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = combine(a[i], b[i]);
        return out;
      }
      if (a.size() == 1 || b.size() == 1) {
        const Tensor& big = a.size() == 1 ? b : a;
        const double s = a.size() == 1 ? a[0] : b[0];
        Tensor out(big.shape());
        for (std::size_t i = 0; i < big.size(); ++i) out[i] = combine(big[i], s);
        return out;
      }
      mismatch(op, shape_str(a.shape()) + " or a single element", b.shape());
    }
    case OpKind::add_broadcast_col: {
      const Tensor& m = *in[0];
      const Tensor& v = *in[1];
      if (m.rank() != 2) mismatch(op, "rank-2 matrix", m.shape());
      if (v.rank() != 1 || v.size() != m.rows()) {
        mismatch(op, "vector of length " + std::to_string(m.rows()), v.shape());
      }
      Tensor out = m;
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) += v[r];
      return out;
    }
    case OpKind::tanh: {
      Tensor out = *in[0];
      for (auto& x : out.storage()) x = std::tanh(x);
      return out;
    }
    case OpKind::sigmoid: {
      Tensor out = *in[0];
      for (auto& x : out.storage()) {
        x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      }
      return out;
    }
    case OpKind::softmax_axis: {
      const Tensor& a = *in[0];
      if (attr.axis >= a.rank()) mismatch(op, "axis < rank (axis " + std::to_string(attr.axis) + ")", a.shape());
      Tensor out = a;
      for_each_softmax_group(a, attr.axis, [&](std::size_t start, std::size_t stride, std::size_t len) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, a[start + i * stride]);
        double sum = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double e = std::exp(a[start + i * stride] - mx);
          out[start + i * stride] = e;
          sum += e;
        }
        for (std::size_t i = 0; i < len; ++i) out[start + i * stride] /= sum;
      });
      return out;
    }
    case OpKind::log_softmax: {
      const Tensor& a = *in[0];
      if (a.rank() != 1) mismatch(op, "rank-1 vector", a.shape());
      double mx = -std::numeric_limits<double>::infinity();
      for (double x : a.storage()) mx = std::max(mx, x);
      double sum = 0.0;
      for (double x : a.storage()) sum += std::exp(x - mx);
      const double lse = mx + std::log(sum);
      Tensor out = a;
      for (auto& x : out.storage()) x -= lse;
      return out;
    }
    case OpKind::concat_rows: {
      if (in.empty()) throw std::invalid_argument("concat_rows: needs at least one input");
      const std::size_t rank = in[0]->rank();
      const std::size_t cols = in[0]->cols();
      std::size_t rows = 0;
      std::vector<double> values;
      for (const Tensor* t : in) {
        if (t->rank() != rank || t->cols() != cols) {
          mismatch(op, rank == 1 ? "rank-1 parts" : ("parts with " + std::to_string(cols) + " columns"),
                   t->shape());
        }
        rows += t->rows();
        values.insert(values.end(), t->storage().begin(), t->storage().end());
      }
      return rank == 1 ? Tensor({rows}, std::move(values)) : Tensor({rows, cols}, std::move(values));
    }
    case OpKind::row_lookup: {
      const Tensor& table = *in[0];
      if (attr.indices.empty()) throw std::invalid_argument("row_lookup: empty id list");
      const std::size_t cols = table.rank() == 1 ? 1 : table.cols();
      std::vector<double> values;
      values.reserve(attr.indices.size() * cols);
      for (auto id : attr.indices) {
        if (id >= table.rows()) {
          throw std::out_of_range("row_lookup: id " + std::to_string(id) + " outside table " +
                                  shape_str(table.shape()));
        }
        for (std::size_t c = 0; c < cols; ++c) values.push_back(table[id * cols + c]);
      }
      if (table.rank() == 1) return Tensor({attr.indices.size()}, std::move(values));
      if (attr.squeeze && attr.indices.size() == 1) return Tensor({cols}, std::move(values));
      return Tensor({attr.indices.size(), cols}, std::move(values));
    }
    case OpKind::slice_rows: {
      const Tensor& a = *in[0];
      if (attr.begin >= attr.end || attr.end > a.rows()) {
        mismatch(op, "row range [" + std::to_string(attr.begin) + "," + std::to_string(attr.end) +
                         ") inside the operand",
                 a.shape());
      }
      const std::size_t cols = a.rank() == 1 ? 1 : a.cols();
      std::vector<double> values(a.storage().begin() + attr.begin * cols,
                                 a.storage().begin() + attr.end * cols);
      if (a.rank() == 1) return Tensor({attr.end - attr.begin}, std::move(values));
      return Tensor({attr.end - attr.begin, cols}, std::move(values));
    }
    case OpKind::transpose:
      return in[0]->transposed();
    case OpKind::dot: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 1 || b.shape() != a.shape()) mismatch(op, shape_str(a.shape()) + " vectors", b.shape());
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return Tensor::scalar(s);
    }
    case OpKind::scale: {
      Tensor out = *in[0];
      for (auto& x : out.storage()) x *= attr.factor;
      return out;
    }
  }
  throw std::logic_error("unhandled op");
}

std::size_t arity(OpKind op) {
  switch (op) {
    case OpKind::matmul:
    case OpKind::add:
    case OpKind::add_broadcast_col:
    case OpKind::elementwise_mul:
    case OpKind::dot:
      return 2;
    case OpKind::concat_rows:
      return 0;
    default:
      return 1;
  }
}

}  // namespace

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

NodeId Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return it->second;
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = !p.frozen;
  const NodeId id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return id;
}

NodeId Graph::apply(OpKind op, std::span<const NodeId> inputs, const OpAttr& attr) {
  if (op == OpKind::leaf) throw std::invalid_argument("apply: leaf nodes are created with constant/variable/parameter");
  if (const auto n = arity(op); n != 0) expect_arity(op, inputs, n);
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  bool needs = false;
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw std::out_of_range(std::string(op_name(op)) + ": unknown node id");
    in.push_back(&nodes_[id].value);
    needs = needs || nodes_[id].needs_grad;
  }
  Node n;
  n.op = op;
  n.inputs.assign(inputs.begin(), inputs.end());
  n.attr = attr;
  n.value = forward(op, in, attr);
  n.needs_grad = needs;
  assert(n.value.all_finite() && "non-finite forward value");
  return push(std::move(n));
}

std::vector<double>& Graph::grad_slot(NodeId id) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

void Graph::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw std::out_of_range("backward: unknown node id");
  if (nodes_[loss].value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(nodes_[loss].value.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_slot(loss)[0] = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.grad.empty() || !node.needs_grad) continue;
    if (node.op == OpKind::leaf) {
      if (node.param) {
        auto& pg = node.param->grad;
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += node.grad[j];
      }
      continue;
    }
    backprop_node(node);
  }
}

void Graph::backprop_node(const Node& node) {
  const auto& dy = node.grad;
  const Tensor& y = node.value;
  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].needs_grad; };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };

  switch (node.op) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t n = a.rows(), inner = a.cols(), m = b.rank() == 1 ? 1 : b.cols();
      if (wants(0)) {
        auto& da = grad_slot(node.inputs[0]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < m; ++c) {
            const double g = dy[i * m + c];
            if (g == 0.0) continue;
            for (std::size_t j = 0; j < inner; ++j) da[i * inner + j] += g * b[j * m + c];
          }
      }
      if (wants(1)) {
        auto& db = grad_slot(node.inputs[1]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < inner; ++j) {
            const double aij = a[i * inner + j];
            if (aij == 0.0) continue;
            for (std::size_t c = 0; c < m; ++c) db[j * m + c] += aij * dy[i * m + c];
          }
      }
      return;
    }
    case OpKind::add:
    case OpKind::elementwise_mul: {
      const bool is_add = node.op == OpKind::add;
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        const Tensor& self = in(k);
        const Tensor& other = in(1 - k);
        auto& d = grad_slot(node.inputs[k]);
        for (std::size_t i = 0; i < y.size(); ++i) {
          const double o = is_add ? 1.0 : other[other.size() == 1 ? 0 : i];
          d[self.size() == 1 ? 0 : i] += dy[i] * o;
        }
      }
      return;
    }
    case OpKind::add_broadcast_col: {
      const std::size_t rows = y.rows(), cols = y.cols();
      if (wants(0)) {
        auto& dm = grad_slot(node.inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i) dm[i] += dy[i];
      }
      if (wants(1)) {
        auto& dv = grad_slot(node.inputs[1]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) dv[r] += dy[r * cols + c];
      }
      return;
    }
    case OpKind::tanh: {
      auto& d = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < y.size(); ++i) d[i] += dy[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case OpKind::sigmoid: {
      auto& d = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < y.size(); ++i) d[i] += dy[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case OpKind::softmax_axis: {
      auto& d = grad_slot(node.inputs[0]);
      for_each_softmax_group(y, node.attr.axis, [&](std::size_t start, std::size_t stride, std::size_t len) {
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += dy[start + i * stride] * y[start + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t j = start + i * stride;
          d[j] += y[j] * (dy[j] - s);
        }
      });
      return;
    }
    case OpKind::log_softmax: {
      auto& d = grad_slot(node.inputs[0]);
      double s = 0.0;
      for (double g : dy) s += g;
      for (std::size_t i = 0; i < y.size(); ++i) d[i] += dy[i] - std::exp(y[i]) * s;
      return;
    }
    case OpKind::concat_rows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t n = in(k).size();
        if (wants(k)) {
          auto& d = grad_slot(node.inputs[k]);
          for (std::size_t i = 0; i < n; ++i) d[i] += dy[offset + i];
        }
        offset += n;
      }
      return;
    }
    case OpKind::row_lookup: {
      const Tensor& table = in(0);
      const std::size_t cols = table.rank() == 1 ? 1 : table.cols();
      auto& d = grad_slot(node.inputs[0]);
      for (std::size_t k = 0; k < node.attr.indices.size(); ++k) {
        const std::size_t row = node.attr.indices[k];
        for (std::size_t c = 0; c < cols; ++c) d[row * cols + c] += dy[k * cols + c];
      }
      return;
    }
    case OpKind::slice_rows: {
      const Tensor& a = in(0);
      const std::size_t cols = a.rank() == 1 ? 1 : a.cols();
      auto& d = grad_slot(node.inputs[0]);
      const std::size_t offset = node.attr.begin * cols;
      for (std::size_t i = 0; i < dy.size(); ++i) d[offset + i] += dy[i];
      return;
    }
    case OpKind::transpose: {
      const std::size_t rows = y.rows(), cols = y.cols();
      auto& d = grad_slot(node.inputs[0]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) d[c * rows + r] += dy[r * cols + c];
      return;
    }
    case OpKind::dot: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        const Tensor& other = in(1 - k);
        auto& d = grad_slot(node.inputs[k]);
        for (std::size_t i = 0; i < other.size(); ++i) d[i] += dy[0] * other[i];
      }
      return;
    }
    case OpKind::scale: {
      auto& d = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += node.attr.factor * dy[i];
      return;
    }
  }
}

std::vector<Parameter*> Graph::bound_parameters() const {
  std::vector<Parameter*> out;
  for (const auto& n : nodes_)
    if (n.param) out.push_back(n.param);
  return out;
}

Var constant(Graph& g, Tensor t) { return {&g, g.constant(std::move(t))}; }
Var param(Graph& g, Parameter& p) { return {&g, g.parameter(p)}; }

namespace {

Var unary(OpKind op, Var a, const OpAttr& attr = {}) { return {a.graph, a.graph->apply(op, {a.id}, attr)}; }
Var binary(OpKind op, Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument(std::string(op_name(op)) + ": operands from different graphs");
  return {a.graph, a.graph->apply(op, {a.id, b.id})};
}

}  // namespace

Var matmul(Var a, Var b) { return binary(OpKind::matmul, a, b); }
Var add(Var a, Var b) { return binary(OpKind::add, a, b); }
Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }
Var add_col(Var matrix, Var vec) { return binary(OpKind::add_broadcast_col, matrix, vec); }
Var mul(Var a, Var b) { return binary(OpKind::elementwise_mul, a, b); }
Var tanh(Var a) { return unary(OpKind::tanh, a); }
Var sigmoid(Var a) { return unary(OpKind::sigmoid, a); }
Var softmax(Var a, std::size_t axis) {
  OpAttr attr;
  attr.axis = axis;
  return unary(OpKind::softmax_axis, a, attr);
}
Var log_softmax(Var a) { return unary(OpKind::log_softmax, a); }

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: needs at least one input");
  std::vector<NodeId> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  Graph* g = parts.front().graph;
  return {g, g->apply(OpKind::concat_rows, ids)};
}

Var concat_rows(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_rows(parts);
}

Var row_lookup(Var table, std::vector<std::size_t> ids) {
  OpAttr attr;
  attr.indices = std::move(ids);
  return unary(OpKind::row_lookup, table, attr);
}

Var row(Var table, std::size_t id) {
  OpAttr attr;
  attr.indices = {id};
  attr.squeeze = true;
  return unary(OpKind::row_lookup, table, attr);
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  OpAttr attr;
  attr.begin = begin;
  attr.end = end;
  return unary(OpKind::slice_rows, a, attr);
}

Var transpose(Var a) { return unary(OpKind::transpose, a); }
Var dot(Var a, Var b) { return binary(OpKind::dot, a, b); }
Var scale(Var a, double factor) {
  OpAttr attr;
  attr.factor = factor;
  return unary(OpKind::scale, a, attr);
}

double grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps, double floor) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be positive");
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = f(g);
    g.backward(loss.id);
  }
  auto evaluate = [&] {
    Graph g;
    return f(g).scalar();
  };
  double worst = 0.0;
  for (auto* p : params) {
    const std::vector<double> analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate();
      p->value[i] = saved - eps;
      const double down = evaluate();
      p->value[i] = saved;
      const double central = (up - down) / (2.0 * eps);
      const double err =
          std::abs(analytic[i] - central) / std::max(floor, std::abs(analytic[i]) + std::abs(central));
      worst = std::max(worst, err);
    }
    p->zero_grad();
  }
  return worst;
}

}  // namespace simnet
