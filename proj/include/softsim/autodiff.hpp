#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "softsim/array.hpp"

namespace softsim {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid as long as the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Array& value() const;
  const std::vector<int>& shape() const;
  bool requires_grad() const;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  ScalarMul,
  SumAll,
  SumAxis,
  Expand,
  BroadcastScalar,
  Relu,
  Sqrt,
  Exp,
  Sigmoid,
  Tanh,
  GatherRows,
  ScatterRows,
  Col,
  ColScatter,
  Concat,
  Slice,
  PadSlice,
  Reshape,
  MatVec,
  MatVecT,
  Outer,
};

/// Eager tape: every operation computes its value on construction and records
/// itself so a reverse sweep can replay the chain rule. Backward functions are
/// expressed in terms of the same recorded operations, so differentiating a
/// gradient (create_graph) needs no special machinery.
class Graph {
 public:
  struct Node {
    Op op = Op::Leaf;
    Array val;
    bool requires_grad = false;
    int p0 = -1, p1 = -1, p2 = -1;   // parents (Concat uses extra list)
    int i0 = 0, i1 = 0;              // op-specific ints (axis, column, offset, ...)
    double c = 0.0;                  // op-specific scalar
    std::shared_ptr<std::vector<int>> idx;         // gather/scatter indices
    std::shared_ptr<std::vector<int>> extra;       // concat parents
  };

  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Array a);
  Var input(Array a);  // leaf that accumulates gradient

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);   // elementwise; either side may be scalar
  Var div(Var a, Var b);   // elementwise; either side may be scalar
  Var neg(Var a);
  Var scalar_mul(double c, Var a);
  Var sum(Var a);                    // total sum -> scalar
  Var sum_axis(Var a, int axis);     // 2-d only
  Var expand(Var a, int axis, int count);  // 1-d -> 2-d, repeat along axis
  Var broadcast_scalar(Var a, std::vector<int> shape);
  Var relu(Var a);
  Var sqrt(Var a);
  Var exp(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var gather_rows(Var a, std::shared_ptr<std::vector<int>> idx);
  Var scatter_rows(Var a, std::shared_ptr<std::vector<int>> idx, int n_rows);
  Var col(Var a, int j);                       // 2-d -> 1-d column
  Var col_scatter(Var a, int j, int n_cols);   // 1-d -> 2-d, zeros elsewhere
  Var concat(const std::vector<Var>& parts);   // 1-d concat
  Var slice(Var a, int offset, int len);       // 1-d slice
  Var pad_slice(Var a, int offset, int total); // 1-d embed into zeros
  Var reshape(Var a, std::vector<int> shape);
  Var matvec(Var w, Var x);      // (p,q)x(q,) -> (p,)
  Var matvec_t(Var w, Var g);    // (p,q)^T (p,) -> (q,)
  Var outer(Var u, Var v);       // (p,),(q,) -> (p,q)

  // Derived conveniences.
  Var square(Var a) { return mul(a, a); }
  Var dot(Var a, Var b) { return sum(mul(a, b)); }
  Var affine(Var w, Var x, Var b) { return add(matvec(w, x), b); }
  Var add_const(Var a, double c) { return add(a, constant(Array::scalar(c))); }
  Var mean(Var a);

  /// Batched 2x2 products on (m,4) row-major [a00,a01,a10,a11] layouts.
  Var mat22_mul(Var a, Var b);
  Var det22(Var f);  // (m,4) -> (m,)

  /// Single-matrix wrappers on shape (2,2).
  Var matmul_2x2(Var a, Var b);
  Var det_2x2(Var a);

  /// d(y)/d(xs). y must be scalar. An x with no path to y yields zeros.
  /// With create_graph the results stay differentiable; otherwise they are
  /// detached constants.
  std::vector<Var> gradient(Var y, const std::vector<Var>& xs, bool create_graph);

 private:
  int push(Node n);
  Var make(Op op, Array val, std::initializer_list<Var> parents);
  void check_same_graph(Var v) const;
  void backward_node(int id, Var adj, std::vector<Var>& adjoints, std::vector<char>& has);
  void accumulate(int parent, Var contribution, std::vector<Var>& adjoints, std::vector<char>& has);

  std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return graph->node(id).val; }
inline const std::vector<int>& Var::shape() const { return graph->node(id).val.shape; }
inline bool Var::requires_grad() const { return graph->node(id).requires_grad; }

inline Var operator+(Var a, Var b) { return a.graph->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.graph->div(a, b); }
inline Var operator-(Var a) { return a.graph->neg(a); }
inline Var operator*(double c, Var a) { return a.graph->scalar_mul(c, a); }

/// Hessian-vector product (d2E/dx2)v computed as d/dx <grad E, v>.
/// energy: (Graph&, Var x) -> scalar Var.
Array hvp(const std::function<Var(Graph&, Var)>& energy, const Array& x, const Array& v);

/// z^T (df/da) with f = -grad_x E, computed as -d/da <grad_x E, z>.
/// energy: (Graph&, Var x, Var a) -> scalar Var. Result has the shape of a.
Array mixed_vjp(const std::function<Var(Graph&, Var, Var)>& energy, const Array& x,
                const Array& a, const Array& z);

}  // namespace softsim
