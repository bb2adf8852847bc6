#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctrfusion/params.hpp"
#include "ctrfusion/tensor.hpp"

namespace ctrfusion {

// Handle to a node of a Graph. Only meaningful for the graph that created it.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

// Bytes, one per column: 1 = attend, 0 = masked.
using Mask = std::vector<unsigned char>;

// Reverse-mode tape over 2-D fp64 matrices. Nodes are appended in evaluation
// order, so walking the tape backwards is a valid reverse topological order.
//
// A graph reads parameters from one ParamStore without copying them; the
// store must not be modified while the graph is alive. Distinct graphs over
// the same store may run concurrently.
class Graph {
 public:
  explicit Graph(const ParamStore& store);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const ParamStore& store() const { return *store_; }

  Var constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  Var constant(const Tensor& t);
  // Leaf bound to a stored parameter; repeated calls return the same node.
  // Vectors of shape {n} become n x 1 columns.
  Var param(std::size_t index);
  Var param(std::string_view name);

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  // a (r x c) + bias (r x 1) broadcast over columns.
  Var add_bias(Var a, Var bias);
  // W x + b for a stored weight/bias pair.
  Var affine(Var x, std::size_t weight, std::size_t bias);

  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var gelu(Var a);

  // Row-wise softmax over columns; masked columns are exactly 0. Throws if a
  // row has every column masked.
  Var masked_softmax(Var scores, std::span<const unsigned char> mask);

  Var concat_rows(std::span<const Var> parts);
  Var concat_rows(Var a, Var b);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var repeat_cols(Var column, std::size_t n);
  Var select_col(Var a, std::size_t col);
  Var mean_cols(Var a);
  Var sum(Var a);

  // Rows of a stored (V x d) table, returned as columns of a (d x n) matrix.
  Var embedding(std::size_t table, std::span<const int> ids);
  Var embedding_lookup(std::size_t table, int index);

  // Normalizes every column over its rows, then applies gamma/beta (d x 1).
  Var layer_norm(Var x, Var gamma, Var beta);

  // Binary cross-entropy on a 1x1 probability, clamped to [eps, 1-eps].
  Var bce(Var prob, int label);
  // -log softmax(logits)[target] for a (V x 1) logit column.
  Var softmax_cross_entropy(Var logits, int target);

  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  Tensor tensor(Var v) const;
  // Gradient of the last backward() root w.r.t. v; zeros when nothing flowed.
  std::vector<double> grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Populates node gradients of everything reachable from a 1x1 root. Any
  // gradients from a previous call are discarded first.
  void backward(Var loss);
  // Adds parameter gradients of the last backward() into buf.
  void accumulate(GradBuffer& buf) const;

  static constexpr double kProbEpsilon = 1e-7;
  static constexpr double kLayerNormEpsilon = 1e-6;

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> storage;
    const double* external = nullptr;  // parameter values, when a leaf
    std::vector<double> grad;
    bool requires_grad = false;
    int param = -1;
    std::function<void(Graph&)> backward;

    const double* data() const { return external ? external : storage.data(); }
    std::size_t size() const { return rows * cols; }
  };

  struct RowGrad {
    std::size_t table;
    std::size_t row;
    std::size_t offset;
  };

  Var push(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad);
  Node& node(Var v) { return nodes_[v.id]; }
  const Node& node(Var v) const { return nodes_[v.id]; }
  double* value_mut(Var v) { return nodes_[v.id].storage.data(); }
  // Gradient buffer of v, allocated on first use; empty if v needs no grad.
  std::span<double> gbuf(Var v);
  std::span<const double> gval(Var v) const { return nodes_[v.id].grad; }
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  void require_same_shape(Var a, Var b, const char* op) const;
  template <typename F, typename D>
  Var unary(Var a, F forward, D derivative);

  const ParamStore* store_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_nodes_;
  std::vector<RowGrad> row_grads_;
  std::vector<double> row_grad_data_;
};

// Backward from a scalar loss into the bound store's gradient buffers: every
// parameter grad is reset to zero and then receives its contribution.
void backward_into(Graph& g, Var loss, ParamStore& store);

}  // namespace ctrfusion
