#pragma once

// Smoothness transition constraint, weak-supervision classifier loss,
// and the total training loss with its ablation switches.
//
// The smoothness constraint on latent trajectories c (action) and v
// (visual): L2-normalize rows, take per-step mean-absolute changes,
// softmax-weight the T-1 steps, then
//   term_i  = ReLU(sum w_c dC - sum w_v dV)
//   term_ii = delta * sum w_c dC
// Per-step change is reduced to a scalar (mean of absolute
// per-dimension differences) before the softmax over time positions.

#include <vector>

#include "hal/autodiff.hpp"
#include "hal/core.hpp"

namespace hal::objective {

using ad::Var;
using core::Matrix;
using core::PosteriorMatrix;

inline Matrix l2_normalize_rows(const Matrix& m, double eps = 1e-8) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    out.row(r) = m.row(r) / (norm < eps ? norm + eps : norm);
  }
  return out;
}

// Entry t = mean over dimensions of |m[t+1] - m[t]|.
inline Eigen::VectorXd temporal_change_magnitudes(const Matrix& m) {
  if (m.rows() < 2) throw std::invalid_argument("need at least two frames");
  Eigen::VectorXd out(m.rows() - 1);
  for (Eigen::Index t = 0; t + 1 < m.rows(); ++t)
    out(t) = (m.row(t + 1) - m.row(t)).cwiseAbs().mean();
  return out;
}

struct SmoothnessReport {
  Eigen::VectorXd delta_v_bar;  // (T-1)
  Eigen::VectorXd delta_c_bar;  // (T-1)
  Eigen::VectorXd w_v;          // (T-1), sums to 1
  Eigen::VectorXd w_c;          // (T-1), sums to 1
  double term_i = 0.0;
  double term_ii = 0.0;
  double total = 0.0;
};

// Differentiable graph pieces of the smoothness loss.
struct SmoothnessGraph {
  Var term_i;   // 1x1
  Var term_ii;  // 1x1
  Var total;    // 1x1
  Var delta_c_bar, delta_v_bar, w_c, w_v;
};

inline SmoothnessGraph smoothness_loss_graph(const Var& c, const Var& v, double delta) {
  if (c->val.rows() < 2) throw std::invalid_argument("need at least two frames");
  if (c->val.rows() != v->val.rows())
    throw std::invalid_argument("smoothness_loss: c and v length mismatch");
  using namespace ad;
  SmoothnessGraph g;
  Var cbar = row_l2_normalize(c);
  Var vbar = row_l2_normalize(v);
  g.delta_c_bar = rowwise_mean(abs_(row_diff(cbar)));
  g.delta_v_bar = rowwise_mean(abs_(row_diff(vbar)));
  g.w_c = softmax_all(g.delta_c_bar);
  g.w_v = softmax_all(g.delta_v_bar);
  Var sc = dot_all(g.w_c, g.delta_c_bar);
  Var sv = dot_all(g.w_v, g.delta_v_bar);
  g.term_i = relu(sub(sc, sv));
  g.term_ii = scale(sc, delta);
  g.total = add(g.term_i, g.term_ii);
  return g;
}

inline SmoothnessReport smoothness_loss(const Matrix& c, const Matrix& v, double delta) {
  ad::NoGradGuard ng;
  auto g = smoothness_loss_graph(ad::constant(c), ad::constant(v), delta);
  SmoothnessReport r;
  r.delta_c_bar = g.delta_c_bar->val.col(0);
  r.delta_v_bar = g.delta_v_bar->val.col(0);
  r.w_c = g.w_c->val.col(0);
  r.w_v = g.w_v->val.col(0);
  r.term_i = ad::scalar(g.term_i);
  r.term_ii = ad::scalar(g.term_ii);
  r.total = ad::scalar(g.total);
  return r;
}

// Mean negative log posterior of the pseudo label over unmasked
// frames; 0 when the mask is all-false.
inline double classifier_loss(const PosteriorMatrix& posteriors,
                              const std::vector<int>& pseudo_labels,
                              const std::vector<bool>& confidence_mask) {
  const Eigen::Index T = posteriors.T();
  core::require(static_cast<Eigen::Index>(pseudo_labels.size()) == T &&
                    static_cast<Eigen::Index>(confidence_mask.size()) == T,
                "classifier_loss: length mismatch");
  double total = 0.0;
  long count = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!confidence_mask[t]) continue;
    core::require(pseudo_labels[t] >= 0 && pseudo_labels[t] < posteriors.num_classes(),
                  "classifier_loss: label out of range");
    total += -std::log(std::max(posteriors.probs(t, pseudo_labels[t]), 1e-12));
    ++count;
  }
  return count > 0 ? total / count : 0.0;
}

struct ElboTerms {
  double recon = 0.0;
  double kl_v = 0.0;
  double kl_c = 0.0;
};

struct LossSwitches {
  bool use_Lr = true;
  bool use_Ls = true;
  bool use_LKL = true;
  bool use_delta = true;
};

// Eq-10-style combination. The four switches mirror the ablation grid:
// use_Lr / use_LKL drop the ELBO pieces, use_Ls gates term (i) of the
// smoothness constraint and use_delta gates term (ii), so the
// delta-only ablation row keeps its own effect.
inline double total_loss(const ElboTerms& terms, const SmoothnessReport& ls, double ly,
                         double alpha, double beta, const LossSwitches& sw) {
  double elbo_part = 0.0;
  if (sw.use_Lr) elbo_part += terms.recon;
  if (sw.use_LKL) elbo_part += terms.kl_v + terms.kl_c;
  double smooth_part = 0.0;
  if (sw.use_Ls) smooth_part += ls.term_i;
  if (sw.use_delta) smooth_part += ls.term_ii;
  return ly + alpha * elbo_part + beta * smooth_part;
}

}  // namespace hal::objective
