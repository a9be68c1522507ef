#include "softsim/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace softsim {

namespace {

[[noreturn]] void shape_fail(const char* op, const Array& a, const Array& b) {
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                   shape_str(b.shape) + " do not conform");
}

[[noreturn]] void shape_fail1(const char* op, const Array& a, const char* what) {
  throw ShapeError(std::string(op) + ": " + what + ", got " + shape_str(a.shape));
}

}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_same_graph(Var v) const {
  if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Var does not belong to this graph");
}

Var Graph::make(Op op, Array val, std::initializer_list<Var> parents) {
  Node n;
  n.op = op;
  n.val = std::move(val);
  int slot = 0;
  for (Var p : parents) {
    check_same_graph(p);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    if (slot == 0) n.p0 = p.id;
    else if (slot == 1) n.p1 = p.id;
    else n.p2 = p.id;
    ++slot;
  }
  return Var{this, push(std::move(n))};
}

Var Graph::constant(Array a) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(a);
  n.requires_grad = false;
  return Var{this, push(std::move(n))};
}

Var Graph::input(Array a) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(a);
  n.requires_grad = true;
  return Var{this, push(std::move(n))};
}

Var Graph::add(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (same_shape(av, bv)) {
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return make(Op::Add, std::move(out), {a, b});
  }
  if (av.is_scalar()) {
    Array out = bv;
    for (double& v : out.data) v += av.data[0];
    return make(Op::Add, std::move(out), {a, b});
  }
  if (bv.is_scalar()) {
    Array out = av;
    for (double& v : out.data) v += bv.data[0];
    return make(Op::Add, std::move(out), {a, b});
  }
  shape_fail("add", av, bv);
}

Var Graph::sub(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (same_shape(av, bv)) {
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    return make(Op::Sub, std::move(out), {a, b});
  }
  if (bv.is_scalar()) {
    Array out = av;
    for (double& v : out.data) v -= bv.data[0];
    return make(Op::Sub, std::move(out), {a, b});
  }
  if (av.is_scalar()) {
    Array out = bv;
    for (double& v : out.data) v = av.data[0] - v;
    return make(Op::Sub, std::move(out), {a, b});
  }
  shape_fail("sub", av, bv);
}

Var Graph::mul(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (same_shape(av, bv)) {
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return make(Op::Mul, std::move(out), {a, b});
  }
  if (av.is_scalar()) {
    Array out = bv;
    for (double& v : out.data) v *= av.data[0];
    return make(Op::Mul, std::move(out), {a, b});
  }
  if (bv.is_scalar()) {
    Array out = av;
    for (double& v : out.data) v *= bv.data[0];
    return make(Op::Mul, std::move(out), {a, b});
  }
  shape_fail("mul", av, bv);
}

Var Graph::div(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (same_shape(av, bv)) {
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= bv.data[i];
    return make(Op::Div, std::move(out), {a, b});
  }
  if (bv.is_scalar()) {
    Array out = av;
    for (double& v : out.data) v /= bv.data[0];
    return make(Op::Div, std::move(out), {a, b});
  }
  if (av.is_scalar()) {
    Array out = bv;
    for (double& v : out.data) v = av.data[0] / v;
    return make(Op::Div, std::move(out), {a, b});
  }
  shape_fail("div", av, bv);
}

Var Graph::neg(Var a) {
  Array out = a.value();
  for (double& v : out.data) v = -v;
  return make(Op::Neg, std::move(out), {a});
}

Var Graph::scalar_mul(double c, Var a) {
  Array out = a.value();
  for (double& v : out.data) v *= c;
  Var r = make(Op::ScalarMul, std::move(out), {a});
  nodes_[r.id].c = c;
  return r;
}

Var Graph::sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make(Op::SumAll, Array::scalar(s), {a});
}

Var Graph::sum_axis(Var a, int axis) {
  const Array& av = a.value();
  if (av.shape.size() != 2) shape_fail1("sum_axis", av, "expected 2-d array");
  int m = av.shape[0], k = av.shape[1];
  Array out = axis == 0 ? Array::zeros({k}) : Array::zeros({m});
  for (int r = 0; r < m; ++r)
    for (int c2 = 0; c2 < k; ++c2) out.data[axis == 0 ? c2 : r] += av.at(r, c2);
  Var r = make(Op::SumAxis, std::move(out), {a});
  nodes_[r.id].i0 = axis;
  return r;
}

Var Graph::expand(Var a, int axis, int count) {
  const Array& av = a.value();
  if (av.shape.size() != 1) shape_fail1("expand", av, "expected 1-d array");
  int n = av.shape[0];
  // axis is the new repeated axis: axis==1 -> (n,count); axis==0 -> (count,n).
  Array out = axis == 1 ? Array::zeros({n, count}) : Array::zeros({count, n});
  for (int r = 0; r < out.shape[0]; ++r)
    for (int c2 = 0; c2 < out.shape[1]; ++c2) out.at(r, c2) = av.data[axis == 1 ? r : c2];
  Var r = make(Op::Expand, std::move(out), {a});
  nodes_[r.id].i0 = axis;
  nodes_[r.id].i1 = count;
  return r;
}

Var Graph::broadcast_scalar(Var a, std::vector<int> shape) {
  const Array& av = a.value();
  if (!av.is_scalar()) shape_fail1("broadcast_scalar", av, "expected scalar");
  return make(Op::BroadcastScalar, Array::full(std::move(shape), av.data[0]), {a});
}

Var Graph::relu(Var a) {
  Array out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make(Op::Relu, std::move(out), {a});
}

Var Graph::sqrt(Var a) {
  Array out = a.value();
  for (double& v : out.data) v = std::sqrt(v);
  return make(Op::Sqrt, std::move(out), {a});
}

Var Graph::exp(Var a) {
  Array out = a.value();
  for (double& v : out.data) v = std::exp(v);
  return make(Op::Exp, std::move(out), {a});
}

Var Graph::sigmoid(Var a) {
  Array out = a.value();
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return make(Op::Sigmoid, std::move(out), {a});
}

Var Graph::tanh(Var a) {
  Array out = a.value();
  for (double& v : out.data) v = std::tanh(v);
  return make(Op::Tanh, std::move(out), {a});
}

Var Graph::gather_rows(Var a, std::shared_ptr<std::vector<int>> idx) {
  const Array& av = a.value();
  if (av.shape.size() != 2) shape_fail1("gather_rows", av, "expected 2-d array");
  int k = av.shape[1];
  int m = static_cast<int>(idx->size());
  Array out = Array::zeros({m, k});
  for (int r = 0; r < m; ++r)
    for (int c2 = 0; c2 < k; ++c2) out.at(r, c2) = av.at((*idx)[r], c2);
  Var r = make(Op::GatherRows, std::move(out), {a});
  nodes_[r.id].idx = std::move(idx);
  return r;
}

Var Graph::scatter_rows(Var a, std::shared_ptr<std::vector<int>> idx, int n_rows) {
  const Array& av = a.value();
  if (av.shape.size() != 2 || av.shape[0] != static_cast<int>(idx->size()))
    shape_fail1("scatter_rows", av, "expected (len(idx),k) array");
  int k = av.shape[1];
  Array out = Array::zeros({n_rows, k});
  for (int r = 0; r < av.shape[0]; ++r)
    for (int c2 = 0; c2 < k; ++c2) out.at((*idx)[r], c2) += av.at(r, c2);
  Var r = make(Op::ScatterRows, std::move(out), {a});
  nodes_[r.id].idx = std::move(idx);
  nodes_[r.id].i0 = n_rows;
  return r;
}

Var Graph::col(Var a, int j) {
  const Array& av = a.value();
  if (av.shape.size() != 2) shape_fail1("col", av, "expected 2-d array");
  int m = av.shape[0];
  Array out = Array::zeros({m});
  for (int r = 0; r < m; ++r) out.data[r] = av.at(r, j);
  Var r = make(Op::Col, std::move(out), {a});
  nodes_[r.id].i0 = j;
  return r;
}

Var Graph::col_scatter(Var a, int j, int n_cols) {
  const Array& av = a.value();
  if (av.shape.size() != 1) shape_fail1("col_scatter", av, "expected 1-d array");
  int m = av.shape[0];
  Array out = Array::zeros({m, n_cols});
  for (int r = 0; r < m; ++r) out.at(r, j) = av.data[r];
  Var r = make(Op::ColScatter, std::move(out), {a});
  nodes_[r.id].i0 = j;
  nodes_[r.id].i1 = n_cols;
  return r;
}

Var Graph::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int total = 0;
  for (Var p : parts) {
    check_same_graph(p);
    if (p.shape().size() != 1) shape_fail1("concat", p.value(), "expected 1-d arrays");
    total += p.shape()[0];
  }
  Array out = Array::zeros({total});
  int off = 0;
  Node n;
  n.op = Op::Concat;
  n.extra = std::make_shared<std::vector<int>>();
  for (Var p : parts) {
    const Array& pv = p.value();
    for (std::size_t i = 0; i < pv.size(); ++i) out.data[off + i] = pv.data[i];
    off += static_cast<int>(pv.size());
    n.extra->push_back(p.id);
    n.requires_grad = n.requires_grad || p.requires_grad();
  }
  n.val = std::move(out);
  n.p0 = parts[0].id;
  return Var{this, push(std::move(n))};
}

Var Graph::slice(Var a, int offset, int len) {
  const Array& av = a.value();
  if (av.shape.size() != 1) shape_fail1("slice", av, "expected 1-d array");
  Array out = Array::zeros({len});
  for (int i = 0; i < len; ++i) out.data[i] = av.data[offset + i];
  Var r = make(Op::Slice, std::move(out), {a});
  nodes_[r.id].i0 = offset;
  nodes_[r.id].i1 = len;
  return r;
}

Var Graph::pad_slice(Var a, int offset, int total) {
  const Array& av = a.value();
  if (av.shape.size() != 1) shape_fail1("pad_slice", av, "expected 1-d array");
  Array out = Array::zeros({total});
  for (std::size_t i = 0; i < av.size(); ++i) out.data[offset + i] = av.data[i];
  Var r = make(Op::PadSlice, std::move(out), {a});
  nodes_[r.id].i0 = offset;
  nodes_[r.id].i1 = total;
  return r;
}

Var Graph::reshape(Var a, std::vector<int> shape) {
  const Array& av = a.value();
  if (Array::numel_of(shape) != av.size()) shape_fail1("reshape", av, "element count mismatch");
  Array out(std::move(shape), av.data);
  return make(Op::Reshape, std::move(out), {a});
}

Var Graph::matvec(Var w, Var x) {
  const Array& wv = w.value();
  const Array& xv = x.value();
  if (wv.shape.size() != 2 || xv.shape.size() != 1 || wv.shape[1] != xv.shape[0])
    shape_fail("matvec", wv, xv);
  int p = wv.shape[0], q = wv.shape[1];
  Array out = Array::zeros({p});
  for (int r = 0; r < p; ++r) {
    double s = 0.0;
    for (int c2 = 0; c2 < q; ++c2) s += wv.at(r, c2) * xv.data[c2];
    out.data[r] = s;
  }
  return make(Op::MatVec, std::move(out), {w, x});
}

Var Graph::matvec_t(Var w, Var g) {
  const Array& wv = w.value();
  const Array& gv = g.value();
  if (wv.shape.size() != 2 || gv.shape.size() != 1 || wv.shape[0] != gv.shape[0])
    shape_fail("matvec_t", wv, gv);
  int p = wv.shape[0], q = wv.shape[1];
  Array out = Array::zeros({q});
  for (int r = 0; r < p; ++r)
    for (int c2 = 0; c2 < q; ++c2) out.data[c2] += wv.at(r, c2) * gv.data[r];
  return make(Op::MatVecT, std::move(out), {w, g});
}

Var Graph::outer(Var u, Var v) {
  const Array& uv = u.value();
  const Array& vv = v.value();
  if (uv.shape.size() != 1 || vv.shape.size() != 1) shape_fail("outer", uv, vv);
  int p = uv.shape[0], q = vv.shape[0];
  Array out = Array::zeros({p, q});
  for (int r = 0; r < p; ++r)
    for (int c2 = 0; c2 < q; ++c2) out.at(r, c2) = uv.data[r] * vv.data[c2];
  return make(Op::Outer, std::move(out), {u, v});
}

Var Graph::mean(Var a) {
  return scalar_mul(1.0 / static_cast<double>(a.value().size()), sum(a));
}

Var Graph::mat22_mul(Var a, Var b) {
  Var a00 = col(a, 0), a01 = col(a, 1), a10 = col(a, 2), a11 = col(a, 3);
  Var b00 = col(b, 0), b01 = col(b, 1), b10 = col(b, 2), b11 = col(b, 3);
  Var c00 = a00 * b00 + a01 * b10;
  Var c01 = a00 * b01 + a01 * b11;
  Var c10 = a10 * b00 + a11 * b10;
  Var c11 = a10 * b01 + a11 * b11;
  return col_scatter(c00, 0, 4) + col_scatter(c01, 1, 4) + col_scatter(c10, 2, 4) +
         col_scatter(c11, 3, 4);
}

Var Graph::det22(Var f) {
  return col(f, 0) * col(f, 3) - col(f, 1) * col(f, 2);
}

Var Graph::matmul_2x2(Var a, Var b) {
  Var c = mat22_mul(reshape(a, {1, 4}), reshape(b, {1, 4}));
  return reshape(c, {2, 2});
}

Var Graph::det_2x2(Var a) {
  Var d = det22(reshape(a, {1, 4}));
  return sum(d);  // (1,) -> scalar
}

void Graph::accumulate(int parent, Var contribution, std::vector<Var>& adjoints,
                       std::vector<char>& has) {
  if (!nodes_[parent].requires_grad) return;
  if (parent >= static_cast<int>(adjoints.size())) return;  // created during sweep
  // () and (1,) both behave as scalars in broadcasting; pin the adjoint to the
  // parent's exact shape.
  if (contribution.value().shape != nodes_[parent].val.shape &&
      contribution.value().size() == nodes_[parent].val.size())
    contribution = reshape(contribution, nodes_[parent].val.shape);
  if (has[parent])
    adjoints[parent] = add(adjoints[parent], contribution);
  else {
    adjoints[parent] = contribution;
    has[parent] = 1;
  }
}

void Graph::backward_node(int id, Var adj, std::vector<Var>& adjoints, std::vector<char>& has) {
  // By value: building adjoint expressions below appends to nodes_ and can
  // reallocate it.
  const Node n = nodes_[id];
  Var self{this, id};
  auto pvar = [this](int p) { return Var{this, p}; };
  // adj has the shape of this node's value; parent contributions must match
  // each parent's shape (scalar parents of broadcasting ops get reduced).
  auto reduce_to = [this](Var g, int parent) {
    return nodes_[parent].val.is_scalar() && !g.value().is_scalar() ? sum(g) : g;
  };
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      accumulate(n.p0, reduce_to(adj, n.p0), adjoints, has);
      accumulate(n.p1, reduce_to(adj, n.p1), adjoints, has);
      break;
    case Op::Sub:
      accumulate(n.p0, reduce_to(adj, n.p0), adjoints, has);
      accumulate(n.p1, reduce_to(neg(adj), n.p1), adjoints, has);
      break;
    case Op::Mul:
      accumulate(n.p0, reduce_to(mul(adj, pvar(n.p1)), n.p0), adjoints, has);
      accumulate(n.p1, reduce_to(mul(adj, pvar(n.p0)), n.p1), adjoints, has);
      break;
    case Op::Div: {
      Var b = pvar(n.p1);
      accumulate(n.p0, reduce_to(div(adj, b), n.p0), adjoints, has);
      Var gb = neg(div(mul(adj, pvar(n.p0)), mul(b, b)));
      accumulate(n.p1, reduce_to(gb, n.p1), adjoints, has);
      break;
    }
    case Op::Neg:
      accumulate(n.p0, neg(adj), adjoints, has);
      break;
    case Op::ScalarMul:
      accumulate(n.p0, scalar_mul(n.c, adj), adjoints, has);
      break;
    case Op::SumAll: {
      const Array& pv = nodes_[n.p0].val;
      accumulate(n.p0, pv.is_scalar() ? adj : broadcast_scalar(adj, pv.shape), adjoints, has);
      break;
    }
    case Op::SumAxis: {
      const Array& pv = nodes_[n.p0].val;
      accumulate(n.p0, expand(adj, n.i0, pv.shape[n.i0]), adjoints, has);
      break;
    }
    case Op::Expand:
      accumulate(n.p0, sum_axis(adj, n.i0), adjoints, has);
      break;
    case Op::BroadcastScalar:
      accumulate(n.p0, sum(adj), adjoints, has);
      break;
    case Op::Relu: {
      Array mask = nodes_[n.p0].val;
      for (double& v : mask.data) v = v > 0.0 ? 1.0 : 0.0;
      accumulate(n.p0, mul(adj, constant(std::move(mask))), adjoints, has);
      break;
    }
    case Op::Sqrt:
      accumulate(n.p0, scalar_mul(0.5, div(adj, self)), adjoints, has);
      break;
    case Op::Exp:
      accumulate(n.p0, mul(adj, self), adjoints, has);
      break;
    case Op::Sigmoid: {
      Var one_minus = add_const(neg(self), 1.0);
      accumulate(n.p0, mul(adj, mul(self, one_minus)), adjoints, has);
      break;
    }
    case Op::Tanh: {
      Var d = add_const(neg(mul(self, self)), 1.0);
      accumulate(n.p0, mul(adj, d), adjoints, has);
      break;
    }
    case Op::GatherRows:
      accumulate(n.p0, scatter_rows(adj, n.idx, nodes_[n.p0].val.shape[0]), adjoints, has);
      break;
    case Op::ScatterRows:
      accumulate(n.p0, gather_rows(adj, n.idx), adjoints, has);
      break;
    case Op::Col:
      accumulate(n.p0, col_scatter(adj, n.i0, nodes_[n.p0].val.shape[1]), adjoints, has);
      break;
    case Op::ColScatter:
      accumulate(n.p0, col(adj, n.i0), adjoints, has);
      break;
    case Op::Concat: {
      int off = 0;
      for (int p : *n.extra) {
        int len = nodes_[p].val.shape[0];
        accumulate(p, slice(adj, off, len), adjoints, has);
        off += len;
      }
      break;
    }
    case Op::Slice:
      accumulate(n.p0, pad_slice(adj, n.i0, nodes_[n.p0].val.shape[0]), adjoints, has);
      break;
    case Op::PadSlice:
      accumulate(n.p0, slice(adj, n.i0, nodes_[n.p0].val.shape[0]), adjoints, has);
      break;
    case Op::Reshape:
      accumulate(n.p0, reshape(adj, nodes_[n.p0].val.shape), adjoints, has);
      break;
    case Op::MatVec:
      accumulate(n.p0, outer(adj, pvar(n.p1)), adjoints, has);
      accumulate(n.p1, matvec_t(pvar(n.p0), adj), adjoints, has);
      break;
    case Op::MatVecT:
      accumulate(n.p0, outer(pvar(n.p1), adj), adjoints, has);
      accumulate(n.p1, matvec(pvar(n.p0), adj), adjoints, has);
      break;
    case Op::Outer:
      accumulate(n.p0, matvec(adj, pvar(n.p1)), adjoints, has);
      accumulate(n.p1, matvec_t(adj, pvar(n.p0)), adjoints, has);
      break;
  }
}

std::vector<Var> Graph::gradient(Var y, const std::vector<Var>& xs, bool create_graph) {
  check_same_graph(y);
  for (Var x : xs) check_same_graph(x);
  if (!y.value().is_scalar())
    throw std::invalid_argument("gradient: y must be scalar, got shape " +
                                shape_str(y.value().shape));
  int yid = y.id;
  std::vector<Var> adjoints(static_cast<std::size_t>(yid) + 1);
  std::vector<char> has(static_cast<std::size_t>(yid) + 1, 0);
  adjoints[yid] = constant(Array::scalar(1.0));
  has[yid] = 1;
  for (int id = yid; id >= 0; --id) {
    if (!has[id] || !nodes_[id].requires_grad) continue;
    backward_node(id, adjoints[id], adjoints, has);
  }
  std::vector<Var> out;
  out.reserve(xs.size());
  for (Var x : xs) {
    Var g;
    if (x.id <= yid && has[x.id])
      g = adjoints[x.id];
    else
      g = constant(Array::zeros(x.value().shape));
    if (!create_graph && nodes_[g.id].op != Op::Leaf) g = constant(g.value());
    out.push_back(g);
  }
  return out;
}

Array hvp(const std::function<Var(Graph&, Var)>& energy, const Array& x, const Array& v) {
  if (!same_shape(x, v))
    throw ShapeError("hvp: v shape " + shape_str(v.shape) + " must match x shape " +
                     shape_str(x.shape));
  Graph g;
  Var xv = g.input(x);
  Var e = energy(g, xv);
  Var grad = g.gradient(e, {xv}, true)[0];
  Var s = g.dot(grad, g.constant(v));
  return g.gradient(s, {xv}, false)[0].value();
}

Array mixed_vjp(const std::function<Var(Graph&, Var, Var)>& energy, const Array& x,
                const Array& a, const Array& z) {
  if (!same_shape(x, z))
    throw ShapeError("mixed_vjp: z shape " + shape_str(z.shape) + " must match x shape " +
                     shape_str(x.shape));
  Graph g;
  Var xv = g.input(x);
  Var av = g.input(a);
  Var e = energy(g, xv, av);
  Var grad = g.gradient(e, {xv}, true)[0];
  Var s = g.dot(grad, g.constant(z));
  Array out = g.gradient(s, {av}, false)[0].value();
  for (double& val : out.data) val = -val;  // f = -grad_x E
  return out;
}

}  // namespace softsim
