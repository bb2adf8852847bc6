#include "ctrfusion/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ctrfusion/errors.hpp"
#include "ctrfusion/kernels.hpp"

namespace ctrfusion {

using kernels::GemmShape;
using kernels::Trans;

namespace {

std::string dims(std::size_t r, std::size_t c) { return "[" + std::to_string(r) + "x" + std::to_string(c) + "]"; }

}  // namespace

Graph::Graph(const ParamStore& store) : store_(&store), param_nodes_(store.size(), UINT32_MAX) {
  nodes_.reserve(256);
}

Var Graph::push(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.storage = std::move(values);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::span<double> Graph::gbuf(Var v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.size(), 0.0);
  return n.grad;
}

std::span<const double> Graph::value(Var v) const {
  const Node& n = nodes_[v.id];
  return {n.data(), n.size()};
}

double Graph::scalar(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.size() != 1) throw DimensionError("scalar() on non-scalar node " + dims(n.rows, n.cols));
  return n.data()[0];
}

Tensor Graph::tensor(Var v) const {
  const Node& n = nodes_[v.id];
  return Tensor::matrix(n.rows, n.cols, std::vector<double>(n.data(), n.data() + n.size()));
}

std::vector<double> Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return std::vector<double>(n.size(), 0.0);
  return n.grad;
}

void Graph::require_same_shape(Var a, Var b, const char* op) const {
  const Node& x = node(a);
  const Node& y = node(b);
  if (x.rows != y.rows || x.cols != y.cols) {
    throw DimensionError(std::string(op) + ": shape mismatch " + dims(x.rows, x.cols) + " vs " + dims(y.rows, y.cols));
  }
}

Var Graph::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw DimensionError("constant: " + std::to_string(values.size()) + " values for shape " + dims(rows, cols));
  }
  return push(rows, cols, std::move(values), false);
}

Var Graph::constant(const Tensor& t) {
  return constant(t.rows(), t.cols(), std::vector<double>(t.values().begin(), t.values().end()));
}

Var Graph::param(std::size_t index) {
  if (index >= param_nodes_.size()) throw IndexError("parameter index out of range: " + std::to_string(index));
  if (param_nodes_[index] != UINT32_MAX) return Var{param_nodes_[index]};
  const Tensor& t = store_->tensor(index);
  Node n;
  n.rows = t.rows();
  n.cols = t.cols();
  n.external = t.values().data();
  n.requires_grad = true;
  n.param = static_cast<int>(index);
  nodes_.push_back(std::move(n));
  param_nodes_[index] = static_cast<std::uint32_t>(nodes_.size() - 1);
  return Var{param_nodes_[index]};
}

Var Graph::param(std::string_view name) { return param(store_->index(name)); }

Var Graph::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const std::size_t m = trans_a ? na.cols : na.rows;
  const std::size_t ka = trans_a ? na.rows : na.cols;
  const std::size_t kb = trans_b ? nb.cols : nb.rows;
  const std::size_t n = trans_b ? nb.rows : nb.cols;
  if (ka != kb) {
    throw DimensionError("matmul: inner dimensions disagree, " + dims(na.rows, na.cols) + (trans_a ? "^T" : "") +
                         " * " + dims(nb.rows, nb.cols) + (trans_b ? "^T" : ""));
  }
  const GemmShape shape{m, ka, n, trans_a ? Trans::kYes : Trans::kNo, trans_b ? Trans::kYes : Trans::kNo};
  std::vector<double> out(m * n);
  kernels::gemm(shape, value(a), value(b), out);
  Var c = push(m, n, std::move(out), needs(a) || needs(b));
  node(c).backward = [a, b, c, shape](Graph& g) {
    auto dc = g.gval(c);
    if (g.needs(a)) {
      auto da = g.gbuf(a);
      if (shape.trans_a == Trans::kNo) {
        // dA (m x k) = dC (m x n) * op(B)^T
        const Trans tb = shape.trans_b == Trans::kNo ? Trans::kYes : Trans::kNo;
        kernels::gemm({shape.m, shape.n, shape.k, Trans::kNo, tb}, dc, g.value(b), da, true);
      } else {
        // A stored (k x m): dA = op(B) (k x n) * dC^T (n x m)
        kernels::gemm({shape.k, shape.n, shape.m, shape.trans_b, Trans::kYes}, g.value(b), dc, da, true);
      }
    }
    if (g.needs(b)) {
      auto db = g.gbuf(b);
      if (shape.trans_b == Trans::kNo) {
        // dB (k x n) = op(A)^T (k x m) * dC (m x n)
        const Trans ta = shape.trans_a == Trans::kNo ? Trans::kYes : Trans::kNo;
        kernels::gemm({shape.k, shape.m, shape.n, ta, Trans::kNo}, g.value(a), dc, db, true);
      } else {
        // B stored (n x k): dB = dC^T (n x m) * op(A) (m x k)
        kernels::gemm({shape.n, shape.m, shape.k, Trans::kYes, shape.trans_a}, dc, g.value(a), db, true);
      }
    }
  };
  return c;
}

Var Graph::add(Var a, Var b) {
  require_same_shape(a, b, "add");
  auto va = value(a);
  auto vb = value(b);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  Var c = push(rows(a), cols(a), std::move(out), needs(a) || needs(b));
  node(c).backward = [a, b, c](Graph& g) {
    auto dc = g.gval(c);
    for (Var p : {a, b}) {
      if (!g.needs(p)) continue;
      auto dp = g.gbuf(p);
      for (std::size_t i = 0; i < dc.size(); ++i) dp[i] += dc[i];
    }
  };
  return c;
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  auto va = value(a);
  auto vb = value(b);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  Var c = push(rows(a), cols(a), std::move(out), needs(a) || needs(b));
  node(c).backward = [a, b, c](Graph& g) {
    auto dc = g.gval(c);
    if (g.needs(a)) {
      auto da = g.gbuf(a);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
    }
    if (g.needs(b)) {
      auto db = g.gbuf(b);
      for (std::size_t i = 0; i < dc.size(); ++i) db[i] -= dc[i];
    }
  };
  return c;
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  auto va = value(a);
  auto vb = value(b);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  Var c = push(rows(a), cols(a), std::move(out), needs(a) || needs(b));
  node(c).backward = [a, b, c](Graph& g) {
    auto dc = g.gval(c);
    auto va = g.value(a);
    auto vb = g.value(b);
    if (g.needs(a)) {
      auto da = g.gbuf(a);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * vb[i];
    }
    if (g.needs(b)) {
      auto db = g.gbuf(b);
      for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * va[i];
    }
  };
  return c;
}

Var Graph::scale(Var a, double s) {
  auto va = value(a);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * s;
  Var c = push(rows(a), cols(a), std::move(out), needs(a));
  node(c).backward = [a, c, s](Graph& g) {
    auto dc = g.gval(c);
    auto da = g.gbuf(a);
    for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * s;
  };
  return c;
}

Var Graph::add_bias(Var a, Var bias) {
  const std::size_t r = rows(a);
  const std::size_t cc = cols(a);
  if (rows(bias) != r || cols(bias) != 1) {
    throw DimensionError("add_bias: bias " + dims(rows(bias), cols(bias)) + " does not fit " + dims(r, cc));
  }
  auto va = value(a);
  auto vb = value(bias);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < cc; ++j) out[i * cc + j] = va[i * cc + j] + vb[i];
  }
  Var c = push(r, cc, std::move(out), needs(a) || needs(bias));
  node(c).backward = [a, bias, c, r, cc](Graph& g) {
    auto dc = g.gval(c);
    if (g.needs(a)) {
      auto da = g.gbuf(a);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
    }
    if (g.needs(bias)) {
      auto db = g.gbuf(bias);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cc; ++j) s += dc[i * cc + j];
        db[i] += s;
      }
    }
  };
  return c;
}

Var Graph::affine(Var x, std::size_t weight, std::size_t bias) {
  return add_bias(matmul(param(weight), x), param(bias));
}

template <typename F, typename D>
Var Graph::unary(Var a, F forward, D derivative) {
  auto va = value(a);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(va[i]);
  Var c = push(rows(a), cols(a), std::move(out), needs(a));
  node(c).backward = [a, c, derivative](Graph& g) {
    auto dc = g.gval(c);
    auto x = g.value(a);
    auto y = g.value(c);
    auto da = g.gbuf(a);
    for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * derivative(x[i], y[i]);
  };
  return c;
}

Var Graph::tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var Graph::sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Graph::relu(Var a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var Graph::gelu(Var a) {
  // tanh approximation
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(kC * (x + kA * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Var Graph::masked_softmax(Var scores, std::span<const unsigned char> mask) {
  const std::size_t r = rows(scores);
  const std::size_t cc = cols(scores);
  if (!mask.empty() && mask.size() != cc) {
    throw DimensionError("masked_softmax: mask of length " + std::to_string(mask.size()) + " for " + dims(r, cc));
  }
  std::vector<double> out(r * cc);
  if (!kernels::masked_softmax_rows(value(scores), r, cc, mask, out)) {
    throw Error("masked_softmax: every position is masked");
  }
  Var c = push(r, cc, std::move(out), needs(scores));
  node(c).backward = [scores, c, r, cc](Graph& g) {
    auto dc = g.gval(c);
    auto y = g.value(c);
    auto ds = g.gbuf(scores);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cc; ++j) dot += y[i * cc + j] * dc[i * cc + j];
      for (std::size_t j = 0; j < cc; ++j) ds[i * cc + j] += y[i * cc + j] * (dc[i * cc + j] - dot);
    }
  };
  return c;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cc = cols(parts[0]);
  std::size_t total = 0;
  bool any = false;
  for (Var p : parts) {
    if (cols(p) != cc) {
      throw DimensionError("concat_rows: column mismatch " + dims(rows(parts[0]), cc) + " vs " +
                           dims(rows(p), cols(p)));
    }
    total += rows(p);
    any = any || needs(p);
  }
  std::vector<double> out;
  out.reserve(total * cc);
  for (Var p : parts) {
    auto v = value(p);
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Var c = push(total, cc, std::move(out), any);
  node(c).backward = [inputs, c](Graph& g) {
    auto dc = g.gval(c);
    std::size_t offset = 0;
    for (Var p : inputs) {
      const std::size_t n = g.rows(p) * g.cols(p);
      if (g.needs(p)) {
        auto dp = g.gbuf(p);
        for (std::size_t i = 0; i < n; ++i) dp[i] += dc[offset + i];
      }
      offset += n;
    }
  };
  return c;
}

Var Graph::concat_rows(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_rows(parts);
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = rows(parts[0]);
  std::size_t total = 0;
  bool any = false;
  for (Var p : parts) {
    if (rows(p) != r) {
      throw DimensionError("concat_cols: row mismatch " + dims(r, cols(parts[0])) + " vs " + dims(rows(p), cols(p)));
    }
    total += cols(p);
    any = any || needs(p);
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (Var p : parts) {
    auto v = value(p);
    const std::size_t pc = cols(p);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < pc; ++j) out[i * total + offset + j] = v[i * pc + j];
    }
    offset += pc;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Var c = push(r, total, std::move(out), any);
  node(c).backward = [inputs, c, r, total](Graph& g) {
    auto dc = g.gval(c);
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t pc = g.cols(p);
      if (g.needs(p)) {
        auto dp = g.gbuf(p);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < pc; ++j) dp[i * pc + j] += dc[i * total + off + j];
        }
      }
      off += pc;
    }
  };
  return c;
}

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const std::size_t cc = cols(a);
  if (begin + count > rows(a) || count == 0) {
    throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + dims(rows(a), cc));
  }
  auto v = value(a);
  std::vector<double> out(v.begin() + static_cast<long>(begin * cc), v.begin() + static_cast<long>((begin + count) * cc));
  Var c = push(count, cc, std::move(out), needs(a));
  node(c).backward = [a, c, begin, cc](Graph& g) {
    auto dc = g.gval(c);
    auto da = g.gbuf(a);
    for (std::size_t i = 0; i < dc.size(); ++i) da[begin * cc + i] += dc[i];
  };
  return c;
}

Var Graph::repeat_cols(Var column, std::size_t n) {
  if (cols(column) != 1) throw DimensionError("repeat_cols: expected a column, got " + dims(rows(column), cols(column)));
  if (n == 0) throw DimensionError("repeat_cols: zero repeats");
  const std::size_t r = rows(column);
  auto v = value(column);
  std::vector<double> out(r * n);
  for (std::size_t i = 0; i < r; ++i) std::fill_n(out.begin() + static_cast<long>(i * n), n, v[i]);
  Var c = push(r, n, std::move(out), needs(column));
  node(c).backward = [column, c, r, n](Graph& g) {
    auto dc = g.gval(c);
    auto da = g.gbuf(column);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j];
      da[i] += s;
    }
  };
  return c;
}

Var Graph::select_col(Var a, std::size_t col) {
  const std::size_t r = rows(a);
  const std::size_t cc = cols(a);
  if (col >= cc) throw IndexError("select_col: column " + std::to_string(col) + " out of " + dims(r, cc));
  auto v = value(a);
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = v[i * cc + col];
  Var c = push(r, 1, std::move(out), needs(a));
  node(c).backward = [a, c, r, cc, col](Graph& g) {
    auto dc = g.gval(c);
    auto da = g.gbuf(a);
    for (std::size_t i = 0; i < r; ++i) da[i * cc + col] += dc[i];
  };
  return c;
}

Var Graph::mean_cols(Var a) {
  const std::size_t r = rows(a);
  const std::size_t cc = cols(a);
  auto v = value(a);
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cc; ++j) s += v[i * cc + j];
    out[i] = s / static_cast<double>(cc);
  }
  Var c = push(r, 1, std::move(out), needs(a));
  node(c).backward = [a, c, r, cc](Graph& g) {
    auto dc = g.gval(c);
    auto da = g.gbuf(a);
    const double inv = 1.0 / static_cast<double>(cc);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < cc; ++j) da[i * cc + j] += dc[i] * inv;
    }
  };
  return c;
}

Var Graph::sum(Var a) {
  auto v = value(a);
  double s = 0.0;
  for (double x : v) s += x;
  Var c = push(1, 1, {s}, needs(a));
  node(c).backward = [a, c](Graph& g) {
    const double d = g.gval(c)[0];
    auto da = g.gbuf(a);
    for (double& x : da) x += d;
  };
  return c;
}

Var Graph::embedding(std::size_t table, std::span<const int> ids) {
  const Tensor& t = store_->tensor(table);
  const std::size_t vocab = t.rows();
  const std::size_t d = t.cols();
  const std::size_t n = ids.size();
  if (n == 0) throw DimensionError("embedding: no indices");
  std::vector<double> out(d * n);
  for (std::size_t j = 0; j < n; ++j) {
    const int id = ids[j];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: index " + std::to_string(id) + " out of range for table " +
                       store_->name(table) + " with " + std::to_string(vocab) + " rows");
    }
    const double* row = t.values().data() + static_cast<std::size_t>(id) * d;
    for (std::size_t i = 0; i < d; ++i) out[i * n + j] = row[i];
  }
  std::vector<int> idx(ids.begin(), ids.end());
  Var c = push(d, n, std::move(out), true);
  node(c).backward = [table, idx = std::move(idx), c, d, n](Graph& g) {
    auto dc = g.gval(c);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t offset = g.row_grad_data_.size();
      for (std::size_t i = 0; i < d; ++i) g.row_grad_data_.push_back(dc[i * n + j]);
      g.row_grads_.push_back({table, static_cast<std::size_t>(idx[j]), offset});
    }
  };
  return c;
}

Var Graph::embedding_lookup(std::size_t table, int index) {
  const int ids[] = {index};
  return embedding(table, ids);
}

Var Graph::layer_norm(Var x, Var gamma, Var beta) {
  const std::size_t d = rows(x);
  const std::size_t n = cols(x);
  if (rows(gamma) != d || cols(gamma) != 1 || rows(beta) != d || cols(beta) != 1) {
    throw DimensionError("layer_norm: gamma/beta must be " + dims(d, 1));
  }
  auto v = value(x);
  auto gm = value(gamma);
  auto bt = value(beta);
  std::vector<double> out(d * n);
  // Saved per column: normalized values and 1/sigma.
  std::vector<double> xhat(d * n);
  std::vector<double> inv_sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += v[i * n + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = v[i * n + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    inv_sigma[j] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (v[i * n + j] - mean) * is;
      xhat[i * n + j] = h;
      out[i * n + j] = h * gm[i] + bt[i];
    }
  }
  Var c = push(d, n, std::move(out), needs(x) || needs(gamma) || needs(beta));
  node(c).backward = [x, gamma, beta, c, d, n, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Graph& g) {
    auto dc = g.gval(c);
    auto gm = g.value(gamma);
    if (g.needs(gamma) || g.needs(beta)) {
      auto dg = g.gbuf(gamma);
      auto db = g.gbuf(beta);
      for (std::size_t i = 0; i < d; ++i) {
        double sg = 0.0;
        double sb = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          sg += dc[i * n + j] * xhat[i * n + j];
          sb += dc[i * n + j];
        }
        if (!dg.empty()) dg[i] += sg;
        if (!db.empty()) db[i] += sb;
      }
    }
    if (!g.needs(x)) return;
    auto dx = g.gbuf(x);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < n; ++j) {
      double mean_dh = 0.0;
      double mean_dh_h = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double dh = dc[i * n + j] * gm[i];
        mean_dh += dh;
        mean_dh_h += dh * xhat[i * n + j];
      }
      mean_dh *= inv_d;
      mean_dh_h *= inv_d;
      for (std::size_t i = 0; i < d; ++i) {
        const double dh = dc[i * n + j] * gm[i];
        dx[i * n + j] += inv_sigma[j] * (dh - mean_dh - xhat[i * n + j] * mean_dh_h);
      }
    }
  };
  return c;
}

Var Graph::bce(Var prob, int label) {
  if (rows(prob) != 1 || cols(prob) != 1) throw DimensionError("bce: probability must be 1x1");
  if (label != 0 && label != 1) throw Error("bce: label must be 0 or 1, got " + std::to_string(label));
  const double raw = value(prob)[0];
  const double p = std::clamp(raw, kProbEpsilon, 1.0 - kProbEpsilon);
  const double loss = label == 1 ? -std::log(p) : -std::log(1.0 - p);
  Var c = push(1, 1, {loss}, needs(prob));
  const bool clamped = raw != p;
  node(c).backward = [prob, c, p, label, clamped](Graph& g) {
    if (clamped) return;
    const double d = g.gval(c)[0];
    auto dp = g.gbuf(prob);
    dp[0] += d * (label == 1 ? -1.0 / p : 1.0 / (1.0 - p));
  };
  return c;
}

Var Graph::softmax_cross_entropy(Var logits, int target) {
  const std::size_t v = rows(logits);
  if (cols(logits) != 1) throw DimensionError("softmax_cross_entropy: logits must be a column");
  if (target < 0 || static_cast<std::size_t>(target) >= v) {
    throw IndexError("softmax_cross_entropy: target " + std::to_string(target) + " outside " + std::to_string(v) +
                     " classes");
  }
  auto z = value(logits);
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> prob(v);
  double total = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    prob[i] = std::exp(z[i] - mx);
    total += prob[i];
  }
  for (double& p : prob) p /= total;
  const double loss = std::log(total) + mx - z[static_cast<std::size_t>(target)];
  Var c = push(1, 1, {loss}, needs(logits));
  node(c).backward = [logits, c, target, prob = std::move(prob)](Graph& g) {
    const double d = g.gval(c)[0];
    auto dz = g.gbuf(logits);
    for (std::size_t i = 0; i < prob.size(); ++i) dz[i] += d * prob[i];
    dz[static_cast<std::size_t>(target)] -= d;
  };
  return c;
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.rows != 1 || root.cols != 1) {
    throw DimensionError("backward: root must be a scalar, got " + dims(root.rows, root.cols));
  }
  for (Node& n : nodes_) n.grad.clear();
  row_grads_.clear();
  row_grad_data_.clear();
  if (!root.requires_grad) return;
  gbuf(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this);
  }
}

void Graph::accumulate(GradBuffer& buf) const {
  for (const Node& n : nodes_) {
    if (n.param < 0 || n.grad.empty()) continue;
    auto d = buf.dense(static_cast<std::size_t>(n.param));
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += n.grad[i];
  }
  for (const RowGrad& r : row_grads_) {
    const std::size_t w = store_->tensor(r.table).cols();
    buf.add_row(r.table, r.row, std::span<const double>(row_grad_data_.data() + r.offset, w));
  }
}

void backward_into(Graph& g, Var loss, ParamStore& store) {
  if (&g.store() != &store) throw Error("backward_into: graph is bound to a different parameter store");
  g.backward(loss);
  store.zero_grads();
  GradBuffer buf(store);
  g.accumulate(buf);
  buf.add_to(store, 1.0);
}

}  // namespace ctrfusion
