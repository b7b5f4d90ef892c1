#pragma once

// Dense rank-2 float64 tensors with reverse-mode differentiation.
//
// Every op returns a fresh immutable tensor. When at least one input requires
// a gradient, the result keeps links to its inputs plus a closure that pushes
// its gradient back into them; `backward` orders those records topologically
// (the tape), runs them in reverse, and then releases them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "roadsense/error.hpp"

namespace roadsense {

/// Compressed sparse row matrix. Used as a constant operator (no gradient).
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  double at(std::size_t r, std::size_t c) const {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      if (col_idx[k] == c) return values[k];
    return 0.0;
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[r * cols + col_idx[k]] += values[k];
    return out;
  }
};

class Tensor;
class Gradients;

namespace detail {

struct Node;

class GradStore {
 public:
  std::vector<double>& of(const Node* node);
  const std::vector<double>* find(const Node* node) const {
    auto it = grads_.find(node);
    return it == grads_.end() ? nullptr : &it->second;
  }
  std::unordered_map<const Node*, std::vector<double>> release() { return std::move(grads_); }

 private:
  std::unordered_map<const Node*, std::vector<double>> grads_;
};

using BackwardFn = std::function<void(const Node& self, GradStore& store)>;

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  bool requires_grad = false;
  bool released = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  bool recorded() const { return static_cast<bool>(backward); }
};

inline std::vector<double>& GradStore::of(const Node* node) {
  auto& g = grads_[node];
  if (g.size() != node->value.size()) g.assign(node->value.size(), 0.0);
  return g;
}

}  // namespace detail

class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (data.size() != rows * cols)
      fail(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data.size()) + " != " +
                                         std::to_string(rows) + "x" + std::to_string(cols));
    node_->rows = rows;
    node_->cols = cols;
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return Tensor(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor(1, 1, {v}, requires_grad); }
  static Tensor column(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return Tensor(n, 1, std::move(v), requires_grad);
  }
  static Tensor row(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return Tensor(1, n, std::move(v), requires_grad);
  }
  static Tensor identity(std::size_t n, bool requires_grad = false) {
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
    return Tensor(n, n, std::move(d), requires_grad);
  }

  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::array<std::size_t, 2> shape() const { return {rows(), cols()}; }
  std::span<const double> data() const { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  double operator()(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) fail(ErrorCode::NotScalarLoss, "item() on a non-scalar tensor");
    return node_->value[0];
  }
  bool requires_grad() const { return node_->requires_grad; }
  bool all_finite() const {
    return std::all_of(node_->value.begin(), node_->value.end(), [](double v) { return std::isfinite(v); });
  }

  /// Leaf copy of the same values, cut from any recorded history.
  Tensor detach(bool requires_grad = false) const { return Tensor(rows(), cols(), node_->value, requires_grad); }

  /// Identity of the underlying storage; stable for the tensor's lifetime.
  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(std::size_t, std::size_t, std::vector<double>, std::initializer_list<const Tensor*>,
                            detail::BackwardFn);
  friend Tensor make_result(std::size_t, std::size_t, std::vector<double>, const std::vector<Tensor>&,
                            detail::BackwardFn);
  friend Gradients backward(const Tensor& loss);
  friend class Gradients;
};

/// Gradient map returned by `backward`, keyed by leaf tensor.
class Gradients {
 public:
  /// Gradient of `t`; zeros when the loss does not depend on it.
  std::vector<double> of(const Tensor& t) const {
    auto it = grads_.find(t.node_.get());
    if (it == grads_.end()) return std::vector<double>(t.size(), 0.0);
    return it->second;
  }
  bool contains(const Tensor& t) const { return grads_.count(t.node_.get()) != 0; }

 private:
  std::unordered_map<const detail::Node*, std::vector<double>> grads_;
  friend Gradients backward(const Tensor& loss);
};

namespace detail {

inline std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          const std::vector<Tensor>& inputs, detail::BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    for (const auto& in : inputs) node->parents.push_back(in.node_);
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          std::initializer_list<const Tensor*> inputs, detail::BackwardFn fn) {
  std::vector<Tensor> ins;
  ins.reserve(inputs.size());
  for (const auto* t : inputs) ins.push_back(*t);
  return make_result(rows, cols, std::move(value), ins, std::move(fn));
}

/// Reverse pass from a scalar loss. Gradients from every path are summed.
/// Records reachable from `loss` are released afterwards.
inline Gradients backward(const Tensor& loss) {
  using detail::Node;
  if (loss.size() != 1) fail(ErrorCode::NotScalarLoss, "loss has shape " + detail::shape_str(loss));
  if (!loss.all_finite()) fail(ErrorCode::NonFiniteValue, "loss is not finite");
  const Node* root = loss.node_.get();
  if (!root->requires_grad) fail(ErrorCode::DetachedTensor, "loss does not depend on any tensor that requires grad");

  // Iterative DFS post-order gives the tape in topological order.
  std::vector<Node*> tape;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node_.get(), 0}};
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->released)
      fail(ErrorCode::DetachedTensor, "graph was already consumed by an earlier backward pass");
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      tape.push_back(node);
      stack.pop_back();
    }
  }

  detail::GradStore store;
  store.of(root)[0] = 1.0;
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    Node* node = *it;
    if (node->recorded() && store.find(node) != nullptr) node->backward(*node, store);
  }

  Gradients out;
  auto all = store.release();
  for (Node* node : tape) {
    if (!node->recorded()) {
      auto it = all.find(node);
      if (it != all.end()) out.grads_.emplace(node, std::move(it->second));
    }
  }
  for (Node* node : tape) {
    if (node->recorded()) {
      node->backward = nullptr;
      node->parents.clear();
      node->released = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    fail(ErrorCode::ShapeMismatch, "matmul: " + detail::shape_str(a) + " * " + detail::shape_str(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return make_result(m, n, std::move(out), {&a, &b}, [m, k, n](const detail::Node& self, detail::GradStore& g) {
    const auto& dc = *g.find(&self);
    const auto* an = self.parents[0].get();
    const auto* bn = self.parents[1].get();
    if (an->requires_grad) {
      // dA = dC B^T, accumulated row-wise against a transposed copy of B.
      std::vector<double> bt(n * k);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bn->value[p * n + j];
      auto& da = g.of(an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double d = dc[i * n + j];
          if (d == 0.0) continue;
          const double* brow = &bt[j * k];
          double* arow = &da[i * k];
          for (std::size_t p = 0; p < k; ++p) arow[p] += d * brow[p];
        }
    }
    if (bn->requires_grad) {
      auto& db = g.of(bn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an->value[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * dc[i * n + j];
        }
    }
  });
}

/// S * B for a constant sparse S.
inline Tensor sparse_matmul(std::shared_ptr<const SparseMatrix> s, const Tensor& b) {
  if (s->cols != b.rows())
    fail(ErrorCode::ShapeMismatch, "sparse_matmul: " + std::to_string(s->rows) + "x" + std::to_string(s->cols) +
                                       " * " + detail::shape_str(b));
  const std::size_t n = b.cols();
  std::vector<double> out(s->rows * n, 0.0);
  const auto& bv = b.values();
  for (std::size_t r = 0; r < s->rows; ++r)
    for (std::size_t k = s->row_ptr[r]; k < s->row_ptr[r + 1]; ++k) {
      const double w = s->values[k];
      const double* brow = &bv[s->col_idx[k] * n];
      double* orow = &out[r * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += w * brow[j];
    }
  return make_result(s->rows, n, std::move(out), {&b}, [s, n](const detail::Node& self, detail::GradStore& g) {
    const auto& dc = *g.find(&self);
    auto& db = g.of(self.parents[0].get());
    for (std::size_t r = 0; r < s->rows; ++r)
      for (std::size_t k = s->row_ptr[r]; k < s->row_ptr[r + 1]; ++k) {
        const double w = s->values[k];
        const std::size_t c = s->col_idx[k];
        for (std::size_t j = 0; j < n; ++j) db[c * n + j] += w * dc[r * n + j];
      }
  });
}

namespace detail {

template <typename Fwd, typename Dfdx>
Tensor unary(const Tensor& x, Fwd fwd, Dfdx dfdx) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.rows(), x.cols(), std::move(out), {&x}, [dfdx](const Node& self, GradStore& g) {
    const auto& dy = *g.find(&self);
    const Node* xn = self.parents[0].get();
    auto& dx = g.of(xn);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * dfdx(xn->value[i], self.value[i]);
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {&a, &b}, [](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& dp = g.of(p.get());
      for (std::size_t i = 0; i < dy.size(); ++i) dp[i] += dy[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {&a, &b}, [](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    if (self.parents[0]->requires_grad) {
      auto& da = g.of(self.parents[0].get());
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& db = g.of(self.parents[1].get());
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {&a, &b}, [](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    const auto* an = self.parents[0].get();
    const auto* bn = self.parents[1].get();
    if (an->requires_grad) {
      auto& da = g.of(an);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& db = g.of(bn);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * an->value[i];
    }
  });
}

/// a (r x c) + b (1 x c), b added to every row.
inline Tensor add_rowwise(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    fail(ErrorCode::ShapeMismatch, "add_rowwise: " + detail::shape_str(a) + " + " + detail::shape_str(b));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b.values()[j];
  return make_result(r, c, std::move(out), {&a, &b}, [r, c](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    if (self.parents[0]->requires_grad) {
      auto& da = g.of(self.parents[0].get());
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& db = g.of(self.parents[1].get());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) db[j] += dy[i * c + j];
    }
  });
}

/// a (r x c) * g (1 x c), g multiplied into every row.
inline Tensor mul_rowwise(const Tensor& a, const Tensor& gain) {
  if (gain.rows() != 1 || gain.cols() != a.cols())
    fail(ErrorCode::ShapeMismatch, "mul_rowwise: " + detail::shape_str(a) + " * " + detail::shape_str(gain));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] * gain.values()[j];
  return make_result(r, c, std::move(out), {&a, &gain}, [r, c](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    const auto* an = self.parents[0].get();
    const auto* gn = self.parents[1].get();
    if (an->requires_grad) {
      auto& da = g.of(an);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[i * c + j] * gn->value[j];
    }
    if (gn->requires_grad) {
      auto& dg = g.of(gn);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dg[j] += dy[i * c + j] * an->value[i * c + j];
    }
  });
}

/// a (r x c) * v (r x 1), row i scaled by v_i.
inline Tensor mul_colwise(const Tensor& a, const Tensor& v) {
  if (v.cols() != 1 || v.rows() != a.rows())
    fail(ErrorCode::ShapeMismatch, "mul_colwise: " + detail::shape_str(a) + " * " + detail::shape_str(v));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] * v.values()[i];
  return make_result(r, c, std::move(out), {&a, &v}, [r, c](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    const auto* an = self.parents[0].get();
    const auto* vn = self.parents[1].get();
    if (an->requires_grad) {
      auto& da = g.of(an);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[i * c + j] * vn->value[i];
    }
    if (vn->requires_grad) {
      auto& dv = g.of(vn);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += dy[i * c + j] * an->value[i * c + j];
        dv[i] += s;
      }
    }
  });
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

/// a * s for a 1x1 tensor s; gradient flows into both.
inline Tensor scale(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) fail(ErrorCode::ShapeMismatch, "scale: factor must be 1x1, got " + detail::shape_str(s));
  const double f = s.values()[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * f;
  return make_result(a.rows(), a.cols(), std::move(out), {&a, &s}, [](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    const auto* an = self.parents[0].get();
    const auto* sn = self.parents[1].get();
    if (an->requires_grad) {
      auto& da = g.of(an);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * sn->value[0];
    }
    if (sn->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * an->value[i];
      g.of(sn)[0] += acc;
    }
  });
}

/// ReLU; the subgradient at 0 is 0.
inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  return detail::unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor reciprocal(const Tensor& x) {
  return detail::unary(x, [](double v) { return 1.0 / v; }, [](double, double y) { return -y * y; });
}

/// Euclidean norm of all entries, as a 1x1 tensor. Gradient at 0 is 0.
inline Tensor l2_norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  const double n = std::sqrt(s);
  return make_result(1, 1, {n}, {&x}, [](const detail::Node& self, detail::GradStore& g) {
    const double dy = (*g.find(&self))[0];
    const double n = self.value[0];
    if (n == 0.0) return;
    const auto* xn = self.parents[0].get();
    auto& dx = g.of(xn);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy * xn->value[i] / n;
  });
}

/// Concatenate along axis 0 (stack rows) or axis 1 (side by side).
inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "concat of nothing");
  if (axis != 0 && axis != 1) fail(ErrorCode::ShapeMismatch, "concat axis must be 0 or 1");
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> offsets;
  if (axis == 0) {
    cols = parts[0].cols();
    for (const auto& p : parts) {
      if (p.cols() != cols) fail(ErrorCode::ShapeMismatch, "concat axis 0: column counts differ");
      offsets.push_back(rows);
      rows += p.rows();
    }
  } else {
    rows = parts[0].rows();
    for (const auto& p : parts) {
      if (p.rows() != rows) fail(ErrorCode::ShapeMismatch, "concat axis 1: row counts differ");
      offsets.push_back(cols);
      cols += p.cols();
    }
  }
  std::vector<double> out(rows * cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const std::size_t r = axis == 0 ? offsets[k] + i : i;
        const std::size_t c = axis == 0 ? j : offsets[k] + j;
        out[r * cols + c] = p(i, j);
      }
  }
  return make_result(rows, cols, std::move(out), parts,
                     [axis, offsets, cols](const detail::Node& self, detail::GradStore& g) {
                       const auto& dy = *g.find(&self);
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const auto* pn = self.parents[k].get();
                         if (!pn->requires_grad) continue;
                         auto& dp = g.of(pn);
                         for (std::size_t i = 0; i < pn->rows; ++i)
                           for (std::size_t j = 0; j < pn->cols; ++j) {
                             const std::size_t r = axis == 0 ? offsets[k] + i : i;
                             const std::size_t c = axis == 0 ? j : offsets[k] + j;
                             dp[i * pn->cols + j] += dy[r * cols + c];
                           }
                       }
                     });
}

/// Normalizes each row to zero mean and unit variance: (x - mean) / sqrt(var + eps).
/// No affine part; compose with mul_rowwise / add_rowwise for gain and bias.
inline Tensor layer_norm(const Tensor& x, double eps = 1e-5) {
  const std::size_t r = x.rows(), c = x.cols();
  if (c == 0) fail(ErrorCode::ShapeMismatch, "layer_norm over zero columns");
  std::vector<double> out(x.size());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &x.values()[i * c];
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (row[j] - mean) * inv_std[i];
  }
  return make_result(r, c, std::move(out), {&x},
                     [r, c, inv_std = std::move(inv_std)](const detail::Node& self, detail::GradStore& g) {
                       const auto& dy = *g.find(&self);
                       auto& dx = g.of(self.parents[0].get());
                       const double inv_c = 1.0 / static_cast<double>(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         double mean_dy = 0.0, mean_dy_y = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           mean_dy += dy[i * c + j];
                           mean_dy_y += dy[i * c + j] * self.value[i * c + j];
                         }
                         mean_dy *= inv_c;
                         mean_dy_y *= inv_c;
                         for (std::size_t j = 0; j < c; ++j)
                           dx[i * c + j] +=
                               inv_std[i] * (dy[i * c + j] - mean_dy - self.value[i * c + j] * mean_dy_y);
                       }
                     });
}

/// Softmax of a column of scores within groups: entries sharing a segment id
/// are normalized together. `values` is (m x 1); ids are < num_segments.
inline Tensor softmax_over_segments(const Tensor& values, const std::vector<std::size_t>& segment_ids,
                                    std::size_t num_segments) {
  if (values.cols() != 1 || values.rows() != segment_ids.size())
    fail(ErrorCode::ShapeMismatch, "softmax_over_segments: values " + detail::shape_str(values) + " vs " +
                                       std::to_string(segment_ids.size()) + " segment ids");
  const std::size_t m = values.rows();
  std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i) {
    if (segment_ids[i] >= num_segments) fail(ErrorCode::ShapeMismatch, "segment id out of range");
    seg_max[segment_ids[i]] = std::max(seg_max[segment_ids[i]], values.values()[i]);
  }
  std::vector<double> out(m);
  std::vector<double> seg_sum(num_segments, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = std::exp(values.values()[i] - seg_max[segment_ids[i]]);
    seg_sum[segment_ids[i]] += out[i];
  }
  for (std::size_t i = 0; i < m; ++i) out[i] /= seg_sum[segment_ids[i]];
  return make_result(m, 1, std::move(out), {&values},
                     [segment_ids, num_segments](const detail::Node& self, detail::GradStore& g) {
                       const auto& dy = *g.find(&self);
                       auto& dx = g.of(self.parents[0].get());
                       std::vector<double> dot(num_segments, 0.0);
                       for (std::size_t i = 0; i < dy.size(); ++i) dot[segment_ids[i]] += dy[i] * self.value[i];
                       for (std::size_t i = 0; i < dy.size(); ++i)
                         dx[i] += self.value[i] * (dy[i] - dot[segment_ids[i]]);
                     });
}

/// out[i] = a[index[i]]
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& index) {
  const std::size_t c = a.cols();
  std::vector<double> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) fail(ErrorCode::ShapeMismatch, "gather_rows: index out of range");
    std::copy_n(&a.values()[index[i] * c], c, &out[i * c]);
  }
  return make_result(index.size(), c, std::move(out), {&a}, [index, c](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    auto& da = g.of(self.parents[0].get());
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) da[index[i] * c + j] += dy[i * c + j];
  });
}

/// out (num_rows x c) with out[index[i]] += a[i].
inline Tensor scatter_add_rows(const Tensor& a, const std::vector<std::size_t>& index, std::size_t num_rows) {
  if (index.size() != a.rows())
    fail(ErrorCode::ShapeMismatch, "scatter_add_rows: " + std::to_string(index.size()) + " indices for " +
                                       detail::shape_str(a));
  const std::size_t c = a.cols();
  std::vector<double> out(num_rows * c, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= num_rows) fail(ErrorCode::ShapeMismatch, "scatter_add_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[index[i] * c + j] += a.values()[i * c + j];
  }
  return make_result(num_rows, c, std::move(out), {&a}, [index, c](const detail::Node& self, detail::GradStore& g) {
    const auto& dy = *g.find(&self);
    auto& da = g.of(self.parents[0].get());
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[index[i] * c + j];
  });
}

/// Mean along an axis: 0 gives a (1 x c) row of column means, 1 a (r x 1) column.
inline Tensor mean_reduce(const Tensor& a, int axis) {
  const std::size_t r = a.rows(), c = a.cols();
  if (axis != 0 && axis != 1) fail(ErrorCode::ShapeMismatch, "mean_reduce axis must be 0 or 1");
  const std::size_t len = axis == 0 ? r : c;
  if (len == 0) fail(ErrorCode::ShapeMismatch, "mean_reduce over an empty axis");
  std::vector<double> out(axis == 0 ? c : r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += a(i, j);
  for (auto& v : out) v /= static_cast<double>(len);
  return make_result(axis == 0 ? 1 : r, axis == 0 ? c : 1, std::move(out), {&a},
                     [axis, r, c, len](const detail::Node& self, detail::GradStore& g) {
                       const auto& dy = *g.find(&self);
                       auto& da = g.of(self.parents[0].get());
                       const double inv = 1.0 / static_cast<double>(len);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[axis == 0 ? j : i] * inv;
                     });
}

/// Column-wise max (axis 0) or row-wise max (axis 1). Gradient goes to the
/// first maximal entry.
inline Tensor max_reduce(const Tensor& a, int axis) {
  const std::size_t r = a.rows(), c = a.cols();
  if (axis != 0 && axis != 1) fail(ErrorCode::ShapeMismatch, "max_reduce axis must be 0 or 1");
  if ((axis == 0 ? r : c) == 0) fail(ErrorCode::ShapeMismatch, "max_reduce over an empty axis");
  const std::size_t n_out = axis == 0 ? c : r;
  std::vector<double> out(n_out, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> arg(n_out, 0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t o = axis == 0 ? j : i;
      if (a(i, j) > out[o]) {
        out[o] = a(i, j);
        arg[o] = i * c + j;
      }
    }
  return make_result(axis == 0 ? 1 : r, axis == 0 ? c : 1, std::move(out), {&a},
                     [arg = std::move(arg)](const detail::Node& self, detail::GradStore& g) {
                       const auto& dy = *g.find(&self);
                       auto& da = g.of(self.parents[0].get());
                       for (std::size_t o = 0; o < arg.size(); ++o) da[arg[o]] += dy[o];
                     });
}

/// Sum of every entry, as a 1x1 tensor.
inline Tensor sum(const Tensor& a) {
  const double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  return make_result(1, 1, {s}, {&a}, [](const detail::Node& self, detail::GradStore& g) {
    const double dy = (*g.find(&self))[0];
    auto& da = g.of(self.parents[0].get());
    for (auto& v : da) v += dy;
  });
}

/// Mean of every entry, as a 1x1 tensor.
inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail(ErrorCode::ShapeMismatch, "mean of an empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size()));
}

}  // namespace roadsense
