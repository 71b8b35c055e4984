#pragma once

// Empirical identifiability checks on pooled (frame, latent) samples.
// block_ident_r2 operationalizes block-wise identifiability: a high
// out-of-sample kernel-ridge R^2 from the estimated block to the true
// block witnesses an (approximately) invertible map. Kernel is RBF
// with the median-pairwise-distance bandwidth; ridge is 1e-3.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hal/core.hpp"
#include "hal/rng.hpp"

namespace hal::identcheck {

using core::Matrix;
using core::Vector;
using core::require;
using rng::Rng;

inline std::vector<Eigen::Index> seeded_permutation(Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
  return perm;
}

inline Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& idx,
                        size_t begin, size_t end) {
  Matrix out(end - begin, m.cols());
  for (size_t i = begin; i < end; ++i) out.row(i - begin) = m.row(idx[i]);
  return out;
}

// Median pairwise Euclidean distance; pairs are subsampled
// deterministically above 2000 points.
inline double median_bandwidth(const Matrix& x, std::uint64_t seed) {
  Eigen::Index n = x.rows();
  const Matrix* data = &x;
  Matrix sub;
  if (n > 2000) {
    auto perm = seeded_permutation(n, rng::derive_seed(seed, "bandwidth", 0));
    sub = take_rows(x, perm, 0, 2000);
    data = &sub;
    n = 2000;
  }
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dists.push_back((data->row(i) - data->row(j)).norm());
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0 ? med : 1.0;
}

inline Matrix rbf_kernel(const Matrix& a, const Matrix& b, double sigma) {
  Matrix k(a.rows(), b.rows());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
  return k;
}

struct R2Result {
  double mean_r2 = 0.0;
  int skipped_dims = 0;  // zero-variance target dims
};

// Kernel ridge regression from source to each target dimension on an
// 80/20 split; returns mean held-out R^2 over dims, clipped at -1.
inline R2Result block_ident_r2_detail(const Matrix& source, const Matrix& target,
                                      std::uint64_t seed) {
  require(source.rows() == target.rows(), "block_ident_r2: row mismatch");
  const Eigen::Index n = source.rows();
  require(n >= 50, "block_ident_r2: need at least 50 samples");
  auto perm = seeded_permutation(n, rng::derive_seed(seed, "split", 0));
  const size_t n_train = static_cast<size_t>(n * 8 / 10);
  Matrix xs_tr = take_rows(source, perm, 0, n_train);
  Matrix xs_te = take_rows(source, perm, n_train, static_cast<size_t>(n));
  Matrix ys_tr = take_rows(target, perm, 0, n_train);
  Matrix ys_te = take_rows(target, perm, n_train, static_cast<size_t>(n));

  const double sigma = median_bandwidth(xs_tr, seed);
  Matrix k_tr = rbf_kernel(xs_tr, xs_tr, sigma);
  k_tr.diagonal().array() += 1e-3;
  Eigen::LDLT<Matrix> solver(k_tr);
  Matrix alpha = solver.solve(ys_tr);
  Matrix pred = rbf_kernel(xs_te, xs_tr, sigma) * alpha;

  R2Result res;
  double sum_r2 = 0.0;
  int used = 0;
  for (Eigen::Index jcol = 0; jcol < target.cols(); ++jcol) {
    const double mean = ys_te.col(jcol).mean();
    const double ss_tot = (ys_te.col(jcol).array() - mean).square().sum();
    if (ss_tot < 1e-12) {
      ++res.skipped_dims;
      continue;
    }
    const double ss_res = (ys_te.col(jcol) - pred.col(jcol)).squaredNorm();
    sum_r2 += std::max(-1.0, 1.0 - ss_res / ss_tot);
    ++used;
  }
  res.mean_r2 = used > 0 ? sum_r2 / used : 0.0;
  return res;
}

inline double block_ident_r2(const Matrix& source, const Matrix& target, std::uint64_t seed) {
  return block_ident_r2_detail(source, target, seed).mean_r2;
}

// TV(normalized chat) / TV(normalized vhat); +inf when the denominator
// vanishes.
inline double smoothness_ratio(const Matrix& chat, const Matrix& vhat) {
  require(chat.rows() >= 2 && vhat.rows() >= 2, "smoothness_ratio: need at least two frames");
  auto tv = [](const Matrix& m) {
    double total = 0.0;
    Matrix bar(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double norm = m.row(r).norm();
      bar.row(r) = m.row(r) / (norm < 1e-8 ? norm + 1e-8 : norm);
    }
    for (Eigen::Index t = 0; t + 1 < m.rows(); ++t)
      total += (bar.row(t + 1) - bar.row(t)).cwiseAbs().mean();
    return total;
  };
  const double denom = tv(vhat);
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return tv(chat) / denom;
}

// Residuals of latents after linearly regressing out the conditioning
// block (with intercept); used for the leakage check.
inline Matrix residualize(const Matrix& y, const Matrix& x) {
  require(y.rows() == x.rows(), "residualize: row mismatch");
  Matrix xa(x.rows(), x.cols() + 1);
  xa.col(0).setOnes();
  xa.rightCols(x.cols()) = x;
  Matrix beta = (xa.transpose() * xa + 1e-9 * Matrix::Identity(xa.cols(), xa.cols()))
                    .ldlt()
                    .solve(xa.transpose() * y);
  return y - xa * beta;
}

// ---- linear probe ----

struct ProbeModel {
  Matrix w;  // p x C
  Eigen::RowVectorXd b;

  Matrix logits(const Matrix& x) const {
    Matrix out = x * w;
    out.rowwise() += b;
    return out;
  }
  std::vector<int> predict(const Matrix& x) const {
    Matrix lg = logits(x);
    std::vector<int> out(lg.rows());
    for (Eigen::Index r = 0; r < lg.rows(); ++r) {
      Eigen::Index arg;
      lg.row(r).maxCoeff(&arg);
      out[r] = static_cast<int>(arg);
    }
    return out;
  }
};

// Softmax regression with L2 penalty 1e-3, full-batch gradient descent
// with backtracking line search, run to gradient norm < 1e-5.
inline ProbeModel fit_softmax_probe(const Matrix& x, const std::vector<int>& y,
                                    int num_classes, double l2 = 1e-3,
                                    double grad_tol = 1e-5, int max_iters = 4000) {
  const Eigen::Index n = x.rows(), p = x.cols();
  ProbeModel m;
  m.w = Matrix::Zero(p, num_classes);
  m.b = Eigen::RowVectorXd::Zero(num_classes);

  auto loss_and_grad = [&](const ProbeModel& pm, Matrix* gw, Eigen::RowVectorXd* gb) {
    Matrix lg = pm.logits(x);
    double nll = 0.0;
    Matrix probs(n, num_classes);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double mx = lg.row(r).maxCoeff();
      Eigen::ArrayXd e = (lg.row(r).array() - mx).exp();
      const double z = e.sum();
      probs.row(r) = (e / z).matrix();
      nll += std::log(z) + mx - lg(r, y[r]);
    }
    nll /= n;
    nll += 0.5 * l2 * pm.w.squaredNorm();
    if (gw) {
      Matrix delta = probs;
      for (Eigen::Index r = 0; r < n; ++r) delta(r, y[r]) -= 1.0;
      delta /= static_cast<double>(n);
      *gw = x.transpose() * delta + l2 * pm.w;
      *gb = delta.colwise().sum();
    }
    return nll;
  };

  double step = 1.0;
  Matrix gw;
  Eigen::RowVectorXd gb;
  double cur = loss_and_grad(m, &gw, &gb);
  for (int it = 0; it < max_iters; ++it) {
    const double gnorm = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
    if (gnorm < grad_tol) break;
    // backtracking Armijo line search
    double trial_step = step * 2.0;
    while (trial_step > 1e-12) {
      ProbeModel trial{m.w - trial_step * gw, m.b - trial_step * gb};
      const double tl = loss_and_grad(trial, nullptr, nullptr);
      if (tl <= cur - 0.25 * trial_step * gnorm * gnorm) {
        m = std::move(trial);
        cur = tl;
        step = trial_step;
        break;
      }
      trial_step *= 0.5;
    }
    if (trial_step <= 1e-12) break;
    cur = loss_and_grad(m, &gw, &gb);
  }
  return m;
}

inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  require(pred.size() == truth.size(), "macro_f1: length mismatch");
  int max_class = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    max_class = std::max({max_class, pred[i], truth[i]});
  std::vector<long> tp(max_class + 1, 0), fp(max_class + 1, 0), fn(max_class + 1, 0);
  std::vector<bool> present(max_class + 1, false);
  for (size_t i = 0; i < pred.size(); ++i) {
    present[truth[i]] = present[pred[i]] = true;
    if (pred[i] == truth[i])
      ++tp[pred[i]];
    else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c <= max_class; ++c) {
    if (!present[c]) continue;
    ++classes;
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    sum += denom > 0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return classes > 0 ? sum / classes : 0.0;
}

// Macro-F1 of a linear probe on an 80/20 split.
inline double linear_probe_f1(const Matrix& latents, const std::vector<int>& labels,
                              std::uint64_t seed) {
  require(static_cast<size_t>(latents.rows()) == labels.size(),
          "linear_probe_f1: length mismatch");
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  std::vector<bool> seen(num_classes, false);
  int distinct = 0;
  for (int y : labels)
    if (!seen[y]) {
      seen[y] = true;
      ++distinct;
    }
  require(distinct >= 2, "linear_probe_f1: need at least 2 classes");

  const Eigen::Index n = latents.rows();
  auto perm = seeded_permutation(n, rng::derive_seed(seed, "probe_split", 0));
  const size_t n_train = static_cast<size_t>(n * 8 / 10);
  Matrix x_tr = take_rows(latents, perm, 0, n_train);
  Matrix x_te = take_rows(latents, perm, n_train, static_cast<size_t>(n));
  std::vector<int> y_tr(n_train), y_te(n - n_train);
  for (size_t i = 0; i < n_train; ++i) y_tr[i] = labels[perm[i]];
  for (size_t i = n_train; i < static_cast<size_t>(n); ++i) y_te[i - n_train] = labels[perm[i]];

  auto probe = fit_softmax_probe(x_tr, y_tr, num_classes);
  return macro_f1(probe.predict(x_te), y_te);
}

// Exact mean silhouette coefficient (Euclidean); inputs above 5000
// samples are uniformly subsampled with the given seed.
inline double cluster_cohesion(const Matrix& latents, const std::vector<int>& labels,
                               std::uint64_t seed) {
  require(static_cast<size_t>(latents.rows()) == labels.size(),
          "cluster_cohesion: length mismatch");
  Matrix x = latents;
  std::vector<int> y = labels;
  if (x.rows() > 5000) {
    auto perm = seeded_permutation(x.rows(), rng::derive_seed(seed, "silhouette", 0));
    Matrix xs = take_rows(x, perm, 0, 5000);
    std::vector<int> ys(5000);
    for (size_t i = 0; i < 5000; ++i) ys[i] = y[perm[i]];
    x = std::move(xs);
    y = std::move(ys);
  }
  const Eigen::Index n = x.rows();
  int num_classes = 0;
  for (int c : y) num_classes = std::max(num_classes, c + 1);
  std::vector<long> counts(num_classes, 0);
  for (int c : y) ++counts[c];
  int distinct = 0;
  for (long cnt : counts)
    if (cnt > 0) ++distinct;
  require(distinct >= 2, "cluster_cohesion: need at least 2 classes");
  for (long cnt : counts)
    require(cnt == 0 || cnt >= 2, "cluster_cohesion: every class needs at least 2 samples");

  double total = 0.0;
  std::vector<double> cluster_sums(num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(cluster_sums.begin(), cluster_sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      cluster_sums[y[j]] += (x.row(i) - x.row(j)).norm();
    }
    const double a = cluster_sums[y[i]] / (counts[y[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_classes; ++c) {
      if (c == y[i] || counts[c] == 0) continue;
      b = std::min(b, cluster_sums[c] / counts[c]);
    }
    const double denom = std::max(a, b);
    total += denom > 0 ? (b - a) / denom : 0.0;
  }
  return total / n;
}

// Top-2 principal components with a deterministic sign convention:
// the largest-magnitude loading of each component is positive.
inline Matrix export_embedding(const Matrix& latents) {
  require(latents.cols() >= 2, "export_embedding: need p >= 2");
  const Eigen::RowVectorXd mean = latents.colwise().mean();
  Matrix centered = latents.rowwise() - mean;
  Matrix cov = centered.transpose() * centered / std::max<double>(1.0, latents.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Matrix components(latents.cols(), 2);
  // eigenvalues ascend; take the last two in descending order
  for (int k = 0; k < 2; ++k) {
    Vector v = eig.eigenvectors().col(latents.cols() - 1 - k);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    components.col(k) = v;
  }
  return centered * components;
}

struct IdentReport {
  double r2_c_from_chat = 0.0;
  double r2_c_from_vhat = 0.0;
  double r2_v_from_vhat = 0.0;
  double r2_c_from_vhat_residual = 0.0;  // vhat with chat regressed out
  double tv_ratio = 0.0;
  double probe_f1_chat = 0.0;
  double probe_f1_raw = 0.0;
  double silhouette_chat = 0.0;
  double silhouette_vhat = 0.0;
};

inline std::string to_csv(const IdentReport& r) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "metric,value\n";
  out << "r2_c_from_chat," << r.r2_c_from_chat << "\n";
  out << "r2_c_from_vhat," << r.r2_c_from_vhat << "\n";
  out << "r2_v_from_vhat," << r.r2_v_from_vhat << "\n";
  out << "r2_c_from_vhat_residual," << r.r2_c_from_vhat_residual << "\n";
  out << "tv_ratio," << r.tv_ratio << "\n";
  out << "probe_f1_chat," << r.probe_f1_chat << "\n";
  out << "probe_f1_raw," << r.probe_f1_raw << "\n";
  out << "silhouette_chat," << r.silhouette_chat << "\n";
  out << "silhouette_vhat," << r.silhouette_vhat << "\n";
  return out.str();
}

}  // namespace hal::identcheck
