#pragma once

// Dense reverse-mode automatic differentiation over double-precision
// matrices. A Tensor is a cheap handle to a node of the computation DAG;
// every operation records its inputs and a propagation rule, and
// Tensor::backward() walks the DAG in reverse topological order.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "prereq/error.hpp"
#include "prereq/random.hpp"

namespace prereq {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix::Zero(value.rows(), value.cols());
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value) { return make(std::move(value), false); }
  static Tensor parameter(Matrix value) { return make(std::move(value), true); }
  static Tensor scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  double item() const {
    if (rows() != 1 || cols() != 1) throw DimensionError("item: tensor is " + shape_str(rows(), cols()));
    return node_->value(0, 0);
  }

  /// In-place update for optimizers and checkpoint loading; leaves only.
  Matrix& mutable_value() { return node_->value; }
  Matrix& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_->requires_grad) node_->grad = Matrix::Zero(rows(), cols());
  }

  /// Reverse pass from a scalar. Each reachable node is visited once, in
  /// reverse topological order, so shared subexpressions accumulate.
  void backward() const {
    if (rows() != 1 || cols() != 1)
      throw DimensionError("backward: root must be scalar, got " + shape_str(rows(), cols()));
    if (!node_->requires_grad) return;
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        detail::Node* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward) {
        n->ensure_grad();
        n->backward(*n);
      }
    }
  }

  // internal
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  static Tensor make(Matrix value, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->value = std::move(value);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->ensure_grad();
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor record(const char* op, Matrix value, std::vector<Tensor> inputs,
                     std::function<void(Node&)> backward) {
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  Tensor out = Tensor::make(std::move(value), rg);
  out.node()->op = op;
  if (rg) {
    for (auto& t : inputs) out.node()->inputs.push_back(t.node());
    out.node()->backward = std::move(backward);
  }
  return out;
}

inline void accumulate(const std::shared_ptr<Node>& n, const Matrix& g) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  n->grad += g;
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  Matrix v = a.value() * b.value();
  return detail::record("matmul", std::move(v), {a, b}, [](detail::Node& n) {
    const auto& a = n.inputs[0];
    const auto& b = n.inputs[1];
    if (a->requires_grad) detail::accumulate(a, n.grad * b->value.transpose());
    if (b->requires_grad) detail::accumulate(b, a->value.transpose() * n.grad);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  return detail::record("add", a.value() + b.value(), {a, b}, [](detail::Node& n) {
    detail::accumulate(n.inputs[0], n.grad);
    detail::accumulate(n.inputs[1], n.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  return detail::record("sub", a.value() - b.value(), {a, b}, [](detail::Node& n) {
    detail::accumulate(n.inputs[0], n.grad);
    detail::accumulate(n.inputs[1], -n.grad);
  });
}

/// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return detail::record("mul", std::move(v), {a, b}, [](detail::Node& n) {
    const auto& a = n.inputs[0];
    const auto& b = n.inputs[1];
    if (a->requires_grad) detail::accumulate(a, n.grad.cwiseProduct(b->value));
    if (b->requires_grad) detail::accumulate(b, n.grad.cwiseProduct(a->value));
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix v = a.value().transpose();
  return detail::record("transpose", std::move(v), {a},
                        [](detail::Node& n) { detail::accumulate(n.inputs[0], n.grad.transpose()); });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::record("scale", a.value() * s, {a},
                        [s](detail::Node& n) { detail::accumulate(n.inputs[0], n.grad * s); });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Matrix v = a.value().array() + s;
  return detail::record("add_scalar", std::move(v), {a},
                        [](detail::Node& n) { detail::accumulate(n.inputs[0], n.grad); });
}

/// Stacks tensors vertically; all must share a column count.
inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const auto cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols)
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().rows(), cols) + " vs " +
                           shape_str(p.rows(), p.cols()));
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return detail::record("concat_rows", std::move(v), std::move(inputs), [](detail::Node& n) {
    Eigen::Index at = 0;
    for (auto& in : n.inputs) {
      const auto r = in->value.rows();
      if (in->requires_grad) detail::accumulate(in, n.grad.middleRows(at, r));
      at += r;
    }
  });
}

/// Selects rows by index (repeats allowed); gradients scatter-add back.
inline Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  Matrix v(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    const int i = index[k];
    if (i < 0 || i >= a.rows())
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " +
                           shape_str(a.rows(), a.cols()));
    v.row(static_cast<Eigen::Index>(k)) = a.value().row(i);
  }
  std::vector<int> idx(index.begin(), index.end());
  return detail::record("gather_rows", std::move(v), {a}, [idx = std::move(idx)](detail::Node& n) {
    auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    in->ensure_grad();
    for (std::size_t k = 0; k < idx.size(); ++k) in->grad.row(idx[k]) += n.grad.row(static_cast<Eigen::Index>(k));
  });
}

/// Picks a(i, j) for each (i, j) pair into a column vector.
inline Tensor gather_entries(const Tensor& a, std::span<const std::pair<int, int>> pairs) {
  Matrix v(static_cast<Eigen::Index>(pairs.size()), 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    if (i < 0 || j < 0 || i >= a.rows() || j >= a.cols())
      throw DimensionError("gather_entries: (" + std::to_string(i) + "," + std::to_string(j) + ") out of range for " +
                           shape_str(a.rows(), a.cols()));
    v(static_cast<Eigen::Index>(k), 0) = a.value()(i, j);
  }
  std::vector<std::pair<int, int>> idx(pairs.begin(), pairs.end());
  return detail::record("gather_entries", std::move(v), {a}, [idx = std::move(idx)](detail::Node& n) {
    auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    in->ensure_grad();
    for (std::size_t k = 0; k < idx.size(); ++k) in->grad(idx[k].first, idx[k].second) += n.grad(static_cast<Eigen::Index>(k), 0);
  });
}

/// Per-row sum, giving a column vector.
inline Tensor row_sum(const Tensor& a) {
  Matrix v = a.value().rowwise().sum();
  return detail::record("row_sum", std::move(v), {a}, [](detail::Node& n) {
    auto& in = n.inputs[0];
    detail::accumulate(in, n.grad.replicate(1, in->value.cols()));
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::record("sum", std::move(v), {a}, [](detail::Node& n) {
    auto& in = n.inputs[0];
    detail::accumulate(in, Matrix::Constant(in->value.rows(), in->value.cols(), n.grad(0, 0)));
  });
}

inline Tensor mean(const Tensor& a) {
  const auto count = static_cast<double>(a.value().size());
  if (count == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / count);
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

/// relu'(0) is taken as 0.
inline Tensor relu(const Tensor& x) {
  Matrix v = x.value().cwiseMax(0.0);
  return detail::record("relu", std::move(v), {x}, [](detail::Node& n) {
    auto& in = n.inputs[0];
    Matrix mask = (in->value.array() > 0.0).cast<double>();
    detail::accumulate(in, n.grad.cwiseProduct(mask));
  });
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  Matrix v = x.value().unaryExpr([](double t) { return sigmoid(t); });
  return detail::record("sigmoid", v, {x}, [](detail::Node& n) {
    Matrix d = n.value.array() * (1.0 - n.value.array());
    detail::accumulate(n.inputs[0], n.grad.cwiseProduct(d));
  });
}

inline Tensor exp(const Tensor& x) {
  Matrix v = x.value().array().exp();
  return detail::record("exp", std::move(v), {x}, [](detail::Node& n) {
    detail::accumulate(n.inputs[0], n.grad.cwiseProduct(n.value));
  });
}

/// Mean binary cross-entropy of probabilities against fixed {0,1} labels.
/// Probabilities are clamped to [eps, 1 - eps]; where the clamp is active
/// the gradient is zero.
inline Tensor binary_cross_entropy(const Tensor& probs, const Matrix& labels, double eps = 1e-7) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
    throw DimensionError("binary_cross_entropy: " + shape_str(probs.rows(), probs.cols()) + " vs labels " +
                         shape_str(labels.rows(), labels.cols()));
  const auto count = static_cast<double>(labels.size());
  if (count == 0) throw ValidationError("binary_cross_entropy: no pairs");
  double total = 0.0;
  for (Eigen::Index i = 0; i < labels.rows(); ++i)
    for (Eigen::Index j = 0; j < labels.cols(); ++j) {
      const double p = std::clamp(probs.value()(i, j), eps, 1.0 - eps);
      const double y = labels(i, j);
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  Matrix v(1, 1);
  v(0, 0) = total / count;
  return detail::record("bce", std::move(v), {probs}, [labels, eps, count](detail::Node& n) {
    auto& in = n.inputs[0];
    Matrix g(labels.rows(), labels.cols());
    for (Eigen::Index i = 0; i < labels.rows(); ++i)
      for (Eigen::Index j = 0; j < labels.cols(); ++j) {
        const double p = in->value(i, j);
        const double y = labels(i, j);
        g(i, j) = (p < eps || p > 1.0 - eps) ? 0.0 : (-(y / p) + (1.0 - y) / (1.0 - p)) / count;
      }
    detail::accumulate(in, g * n.grad(0, 0));
  });
}

// ---------------------------------------------------------------------------
// Sampling

/// Reparameterized draw z = mu + exp(log_sigma) * eps with eps ~ N(0, I)
/// fixed by the seed; gradients reach mu and log_sigma, eps is a constant.
inline Tensor gaussian_sample(const Tensor& mu, const Tensor& log_sigma, std::uint64_t seed) {
  detail::require_same_shape("gaussian_sample", mu, log_sigma);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix noise(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < noise.rows(); ++i)
    for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = normal(rng);
  return add(mu, mul(exp(log_sigma), Tensor::constant(std::move(noise))));
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Holds first/second moments per parameter;
/// step() consumes the accumulated gradients and zeroes them.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {}) : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
      if (!p.requires_grad()) throw ValidationError("Adam: parameter does not require grad");
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      const Matrix& g = p.grad();
      m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * g;
      v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
      Matrix update = (m_[k] / c1).array() / ((v_[k] / c2).array().sqrt() + opt_.eps);
      p.mutable_value() -= opt_.lr * update;
      p.zero_grad();
    }
  }

  long steps() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return opt_; }
  const Matrix& first_moment(std::size_t k) const { return m_.at(k); }
  const Matrix& second_moment(std::size_t k) const { return v_.at(k); }

 private:
  std::vector<Tensor> params_;
  AdamOptions opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace prereq
