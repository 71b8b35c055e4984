#pragma once

// Reverse-mode automatic differentiation over Eigen double matrices.
// Graphs are built dynamically per forward pass; creation order is a
// topological order, so the backward sweep just walks nodes in reverse
// creation order. Everything is thread-local: concurrent runs must not
// share Vars across threads.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace hal::ad {

using Matrix = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Matrix val;
  Matrix grad;  // allocated lazily, same shape as val
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  std::uint64_t order = 0;

  void ensure_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(val.rows(), val.cols());
  }
};

inline std::uint64_t next_order() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

// While set, new nodes drop their backward closures (cheap eval mode).
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
};

inline Var constant(Matrix v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->order = next_order();
  return n;
}

inline Var scalar_const(double v) { return constant(Matrix::Constant(1, 1, v)); }

// Trainable leaf.
inline Var param(Matrix v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = true;
  n->order = next_order();
  return n;
}

inline Var make_op(Matrix val, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  rg = rg && grad_enabled();
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  n->order = next_order();
  return n;
}

inline double scalar(const Var& v) {
  if (v->val.size() != 1) throw std::logic_error("scalar(): node is not 1x1");
  return v->val(0, 0);
}

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  return make_op(a->val + b->val, {a, b}, [](Node& n) {
    for (int i : {0, 1}) {
      auto& p = n.parents[i];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad += n.grad;
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  return make_op(a->val - b->val, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->ensure_grad();
      n.parents[0]->grad += n.grad;
    }
    if (n.parents[1]->requires_grad) {
      n.parents[1]->ensure_grad();
      n.parents[1]->grad -= n.grad;
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  return make_op(a->val.cwiseProduct(b->val), {a, b}, [](Node& n) {
    auto &a = n.parents[0], &b = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += n.grad.cwiseProduct(b->val);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad += n.grad.cwiseProduct(a->val);
    }
  });
}

inline Var scale(const Var& a, double s) {
  return make_op(s * a->val, {a}, [s](Node& n) {
    n.parents[0]->ensure_grad();
    n.parents[0]->grad += s * n.grad;
  });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var relu(const Var& a) {
  return make_op(a->val.cwiseMax(0.0), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    // subgradient 0 at the kink
    p->grad.array() += n.grad.array() * (p->val.array() > 0.0).cast<double>();
  });
}

inline Var exp_(const Var& a) {
  return make_op(a->val.array().exp().matrix(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += n.grad.array() * n.val.array();
  });
}

inline Var log_(const Var& a) {
  return make_op(a->val.array().log().matrix(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += n.grad.array() / p->val.array();
  });
}

inline Var abs_(const Var& a) {
  return make_op(a->val.cwiseAbs(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += n.grad.array() * p->val.array().sign();
  });
}

inline Var square(const Var& a) {
  return make_op(a->val.cwiseProduct(a->val), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += 2.0 * n.grad.array() * p->val.array();
  });
}

inline Var clamp(const Var& a, double lo, double hi) {
  return make_op(a->val.cwiseMax(lo).cwiseMin(hi), {a}, [lo, hi](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += n.grad.array() *
                       ((p->val.array() > lo) && (p->val.array() < hi)).cast<double>();
  });
}

inline Var stopgrad(const Var& a) { return constant(a->val); }

// ---- linear algebra ----

inline Var matmul(const Var& a, const Var& b) {
  if (a->val.cols() != b->val.rows()) throw std::logic_error("matmul: shape mismatch");
  return make_op(a->val * b->val, {a, b}, [](Node& n) {
    auto &a = n.parents[0], &b = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.noalias() += n.grad * b->val.transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.noalias() += a->val.transpose() * n.grad;
    }
  });
}

inline Var transpose(const Var& a) {
  return make_op(a->val.transpose(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad += n.grad.transpose();
  });
}

// M (T x n) + row vector (1 x n) broadcast over rows.
inline Var add_rowvec(const Var& a, const Var& b) {
  if (b->val.rows() != 1 || a->val.cols() != b->val.cols())
    throw std::logic_error("add_rowvec: shape mismatch");
  Matrix out = a->val;
  out.rowwise() += b->val.row(0);
  return make_op(std::move(out), {a, b}, [](Node& n) {
    auto &a = n.parents[0], &b = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += n.grad;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad += n.grad.colwise().sum();
    }
  });
}

// ---- reductions ----

inline Var sum(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a->val.sum()), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += n.grad(0, 0);
  });
}

inline Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->val.size());
  return make_op(Matrix::Constant(1, 1, a->val.sum() * inv), {a}, [inv](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.array() += n.grad(0, 0) * inv;
  });
}

inline Var rowwise_mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->val.cols());
  return make_op(a->val.rowwise().mean(), {a}, [inv](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.noalias() += n.grad.col(0) * Eigen::RowVectorXd::Constant(p->val.cols(), inv);
  });
}

inline Var rowwise_sum(const Var& a) {
  return make_op(a->val.rowwise().sum(), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.noalias() += n.grad.col(0) * Eigen::RowVectorXd::Ones(p->val.cols());
  });
}

// ---- shape ----

inline Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index nr) {
  return make_op(a->val.middleRows(r0, nr), {a}, [r0, nr](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.middleRows(r0, nr) += n.grad;
  });
}

inline Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index nc) {
  return make_op(a->val.middleCols(c0, nc), {a}, [c0, nc](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    p->grad.middleCols(c0, nc) += n.grad;
  });
}

inline Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::logic_error("hcat: empty");
  Eigen::Index rows = parts[0]->val.rows(), cols = 0;
  for (const auto& p : parts) {
    if (p->val.rows() != rows) throw std::logic_error("hcat: row mismatch");
    cols += p->val.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p->val.cols()) = p->val;
    c += p->val.cols();
  }
  return make_op(std::move(out), parts, [](Node& n) {
    Eigen::Index c = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += n.grad.middleCols(c, p->val.cols());
      }
      c += p->val.cols();
    }
  });
}

inline Var vcat(const Var& a, const Var& b) {
  if (a->val.cols() != b->val.cols()) throw std::logic_error("vcat: col mismatch");
  Matrix out(a->val.rows() + b->val.rows(), a->val.cols());
  out.topRows(a->val.rows()) = a->val;
  out.bottomRows(b->val.rows()) = b->val;
  return make_op(std::move(out), {a, b}, [](Node& n) {
    auto &a = n.parents[0], &b = n.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += n.grad.topRows(a->val.rows());
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad += n.grad.bottomRows(b->val.rows());
    }
  });
}

// Forward difference along time: out[t] = a[t+1] - a[t], (T-1) x n.
inline Var row_diff(const Var& a) {
  const Eigen::Index T = a->val.rows();
  if (T < 2) throw std::invalid_argument("need at least two frames");
  return make_op(Matrix(a->val.bottomRows(T - 1) - a->val.topRows(T - 1)), {a},
                 [T](Node& n) {
                   auto& p = n.parents[0];
                   p->ensure_grad();
                   p->grad.topRows(T - 1) -= n.grad;
                   p->grad.bottomRows(T - 1) += n.grad;
                 });
}

// ---- normalizations ----

inline Var row_softmax(const Var& a) {
  Matrix out(a->val.rows(), a->val.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::ArrayXd e = (a->val.row(r).array() - a->val.row(r).maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return make_op(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
      const double dot = n.grad.row(r).dot(n.val.row(r));
      p->grad.row(r).array() +=
          n.val.row(r).array() * (n.grad.row(r).array() - dot);
    }
  });
}

// Softmax over every entry (used on vectors).
inline Var softmax_all(const Var& a) {
  Eigen::ArrayXXd e = (a->val.array() - a->val.maxCoeff()).exp();
  Matrix out = (e / e.sum()).matrix();
  return make_op(std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    const double dot = (n.grad.array() * n.val.array()).sum();
    p->grad.array() += n.val.array() * (n.grad.array() - dot);
  });
}

// Rowwise x / (||x|| + eps), with the epsilon applied only to rows of
// norm below it so unit rows pass through exactly.
inline Var row_l2_normalize(const Var& a, double eps = 1e-8) {
  Matrix out(a->val.rows(), a->val.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double norm = a->val.row(r).norm();
    out.row(r) = a->val.row(r) / (norm < eps ? norm + eps : norm);
  }
  return make_op(std::move(out), {a}, [eps](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
      const double norm = p->val.row(r).norm();
      const double denom = norm < eps ? norm + eps : norm;
      const double ng = std::max(norm, 1e-300);
      const double xdotg = p->val.row(r).dot(n.grad.row(r));
      p->grad.row(r) += n.grad.row(r) / denom -
                        p->val.row(r) * (xdotg / (ng * denom * denom));
    }
  });
}

// Per-row layer normalization with learned gain/bias (1 x n each).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const Eigen::Index n = x->val.cols();
  Matrix xhat(x->val.rows(), n);
  Eigen::VectorXd inv_std(x->val.rows());
  for (Eigen::Index r = 0; r < x->val.rows(); ++r) {
    const double mu = x->val.row(r).mean();
    const double var = (x->val.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x->val.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    out.row(r) = out.row(r).cwiseProduct(gamma->val.row(0)) + beta->val.row(0);
  auto shared_xhat = std::make_shared<Matrix>(std::move(xhat));
  auto shared_inv = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
  return make_op(std::move(out), {x, gamma, beta}, [shared_xhat, shared_inv](Node& nd) {
    auto &x = nd.parents[0], &gamma = nd.parents[1], &beta = nd.parents[2];
    const Matrix& xh = *shared_xhat;
    const Eigen::VectorXd& inv = *shared_inv;
    const double n = static_cast<double>(xh.cols());
    if (gamma->requires_grad) {
      gamma->ensure_grad();
      gamma->grad += nd.grad.cwiseProduct(xh).colwise().sum();
    }
    if (beta->requires_grad) {
      beta->ensure_grad();
      beta->grad += nd.grad.colwise().sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      for (Eigen::Index r = 0; r < xh.rows(); ++r) {
        Eigen::RowVectorXd gh = nd.grad.row(r).cwiseProduct(gamma->val.row(0));
        const double m1 = gh.sum() / n;
        const double m2 = gh.cwiseProduct(xh.row(r)).sum() / n;
        x->grad.row(r) +=
            ((gh.array() - m1 - xh.row(r).array() * m2) * inv(r)).matrix();
      }
    }
  });
}

// Mean negative log softmax of the given label over masked rows.
// Returns 0 when the mask is empty.
inline Var masked_nll_from_logits(const Var& logits, const std::vector<int>& labels,
                                  const std::vector<bool>& mask) {
  const Eigen::Index T = logits->val.rows();
  if (static_cast<Eigen::Index>(labels.size()) != T ||
      static_cast<Eigen::Index>(mask.size()) != T)
    throw std::logic_error("masked_nll_from_logits: length mismatch");
  long count = 0;
  double total = 0.0;
  Matrix probs(T, logits->val.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    const double mx = logits->val.row(t).maxCoeff();
    Eigen::ArrayXd e = (logits->val.row(t).array() - mx).exp();
    const double z = e.sum();
    probs.row(t) = (e / z).matrix();
    if (mask[t]) {
      if (labels[t] < 0 || labels[t] >= logits->val.cols())
        throw std::logic_error("masked_nll_from_logits: label out of range");
      total += std::log(z) + mx - logits->val(t, labels[t]);
      ++count;
    }
  }
  const double v = count > 0 ? total / count : 0.0;
  auto shared_probs = std::make_shared<Matrix>(std::move(probs));
  auto lab = std::make_shared<std::vector<int>>(labels);
  auto msk = std::make_shared<std::vector<bool>>(mask);
  return make_op(Matrix::Constant(1, 1, v), {logits},
                 [shared_probs, lab, msk, count](Node& n) {
                   if (count == 0) return;
                   auto& p = n.parents[0];
                   p->ensure_grad();
                   const double g = n.grad(0, 0) / count;
                   for (Eigen::Index t = 0; t < p->val.rows(); ++t) {
                     if (!(*msk)[t]) continue;
                     p->grad.row(t) += g * shared_probs->row(t);
                     p->grad(t, (*lab)[t]) -= g;
                   }
                 });
}

// ---- composites ----

inline Var mse(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

inline Var dot_all(const Var& a, const Var& b) { return sum(mul(a, b)); }

// ---- backward ----

inline void backward(const Var& loss) {
  if (loss->val.size() != 1) throw std::logic_error("backward: loss must be scalar");
  if (!loss->requires_grad) return;
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.get()};
  seen.insert(loss.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    topo.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(topo.begin(), topo.end(),
            [](const Node* a, const Node* b) { return a->order > b->order; });
  loss->ensure_grad();
  loss->grad(0, 0) += 1.0;
  for (Node* n : topo) {
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace hal::ad
