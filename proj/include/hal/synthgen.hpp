#pragma once

// Synthetic sequences from the hierarchical causal process: slow
// action latents c drive fast visual latents v, observations are an
// invertible mixing of v. Within a segment the action latent is
// exactly constant (the deterministic pseudo-state chain); at segment
// boundaries it jumps through a fixed random smooth map with
// nonsingular Jacobian. Ground truth (latents, regimes, labels,
// transcript) is returned alongside the features so identifiability
// and segmentation can be verified.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "hal/core.hpp"
#include "hal/ingest.hpp"
#include "hal/rng.hpp"

namespace hal::synthgen {

using core::FeatureSequence;
using core::LatentPair;
using core::Matrix;
using core::require;
using core::Transcript;
using core::Vector;
using rng::Rng;

struct GeneratorSpec {
  int T = 100;
  int n_c = 2;
  int n_v = 4;
  int d = 8;
  int K = 4;
  int min_segment_len = 5;
  double noise_scale_v = 0.3;
  double noise_scale_c = 0.5;
  int mixing_depth = 2;
  std::uint64_t seed = 0;

  void validate() const {
    require(T >= 1 && n_c >= 1 && n_v >= 1 && d >= 1, "GeneratorSpec: dims must be positive");
    require(K >= 1 && min_segment_len >= 1, "GeneratorSpec: K and min_segment_len >= 1");
    require(static_cast<long>(K) * min_segment_len <= T,
            "GeneratorSpec: K*min_segment_len exceeds T");
    require(n_v <= d, "GeneratorSpec: mixing requires n_v <= d");
    require(n_v >= 2 * n_c, "GeneratorSpec: need n_v >= 2*n_c");
    require(noise_scale_v >= 0 && noise_scale_c >= 0, "GeneratorSpec: negative noise scale");
    require(mixing_depth >= 1, "GeneratorSpec: mixing_depth >= 1");
  }
};

inline Matrix gaussian_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

// Rescale so the largest singular value equals `target`.
inline Matrix with_spectral_norm(Matrix m, double target) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const double top = svd.singularValues()(0);
  if (top > 0) m *= target / top;
  return m;
}

inline Matrix orthonormal_columns(Rng& rng, int rows, int cols) {
  require(rows >= cols, "orthonormal_columns: need rows >= cols");
  Matrix g = gaussian_matrix(rng, rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  return q;
}

// Invertible mixing: alternating orthonormal-column linear maps and a
// pointwise piecewise-linear nonlinearity (slope 1 for x >= 0, 0.3
// below), so a closed-form left inverse exists. Depth 0 (tests only)
// zero-pads to width d.
struct MixingFunction {
  int in_width = 0;
  int out_width = 0;
  std::vector<Matrix> linears;  // column-orthonormal

  static MixingFunction identity_padded(int n_v, int d) {
    require(n_v <= d, "MixingFunction: n_v must not exceed d");
    MixingFunction g;
    g.in_width = n_v;
    g.out_width = d;
    return g;
  }

  static MixingFunction random(int n_v, int d, int depth, Rng& rng) {
    require(n_v <= d, "MixingFunction: n_v must not exceed d");
    require(depth >= 1, "MixingFunction: depth >= 1");
    MixingFunction g;
    g.in_width = n_v;
    g.out_width = d;
    int w = n_v;
    for (int i = 0; i < depth; ++i) {
      g.linears.push_back(orthonormal_columns(rng, d, w));
      w = d;
    }
    return g;
  }

  static double bend(double x) { return x >= 0 ? x : 0.3 * x; }
  static double unbend(double y) { return y >= 0 ? y : y / 0.3; }

  Eigen::RowVectorXd apply_row(Eigen::RowVectorXd x) const {
    if (linears.empty()) {
      Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(out_width);
      out.head(in_width) = x;
      return out;
    }
    for (const auto& w : linears) {
      x = x * w.transpose();
      x = x.unaryExpr(&MixingFunction::bend);
    }
    return x;
  }

  Eigen::RowVectorXd invert_row(Eigen::RowVectorXd y) const {
    if (linears.empty()) return y.head(in_width);
    for (auto it = linears.rbegin(); it != linears.rend(); ++it) {
      y = y.unaryExpr(&MixingFunction::unbend);
      y = y * (*it);
    }
    return y;
  }

  Matrix apply(const Matrix& v) const {
    require(v.cols() == in_width, "MixingFunction: width mismatch");
    Matrix out(v.rows(), out_width);
    for (Eigen::Index t = 0; t < v.rows(); ++t) out.row(t) = apply_row(v.row(t));
    return out;
  }

  Matrix invert(const Matrix& x) const {
    require(x.cols() == out_width, "MixingFunction: width mismatch");
    Matrix out(x.rows(), in_width);
    for (Eigen::Index t = 0; t < x.rows(); ++t) out.row(t) = invert_row(x.row(t));
    return out;
  }
};

// Jump map for the action latent: rotation + drift + bounded bent
// term + noise. The bent term's gain stays below the rotation's
// smallest singular value, so the Jacobian is nonsingular everywhere.
struct ActionTransition {
  Matrix rotation;   // n_c x n_c orthogonal
  Matrix bend_mix;   // n_c x n_c, spectral norm 1
  Vector drift;      // deterministic per-jump shift
  double bend_gain = 0.3;

  static ActionTransition random(int n_c, double noise_scale_c, Rng& rng) {
    ActionTransition f;
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, n_c, n_c));
    f.rotation = qr.householderQ() * Matrix::Identity(n_c, n_c);
    f.bend_mix = with_spectral_norm(gaussian_matrix(rng, n_c, n_c), 1.0);
    Vector dir = gaussian_matrix(rng, n_c, 1);
    if (dir.norm() > 0) dir.normalize();
    f.drift = 3.0 * std::max(noise_scale_c, 0.25) * dir;
    return f;
  }

  Vector apply(const Vector& c, const Vector& eps) const {
    return rotation * c + drift + bend_gain * (bend_mix * c).array().tanh().matrix() + eps;
  }
};

// One-step visual dynamics v_t = f(v_{t-1}, c_t) + eps: a two-layer
// tanh map whose linear stages are spectral-norm-scaled to 0.9, making
// it a contraction in v for fixed c.
struct VisualTransition {
  Matrix w_v;  // m x n_v
  Matrix w_c;  // m x n_c
  Vector b1;   // m
  Matrix u;    // n_v x m
  Vector b2;   // n_v

  static VisualTransition random(int n_v, int n_c, Rng& rng) {
    const int m = std::max(2 * n_v, 4);
    VisualTransition f;
    f.w_v = with_spectral_norm(gaussian_matrix(rng, m, n_v), 0.9);
    f.w_c = with_spectral_norm(gaussian_matrix(rng, m, n_c), 1.0);
    f.b1 = gaussian_matrix(rng, m, 1) * 0.3;
    f.u = with_spectral_norm(gaussian_matrix(rng, n_v, m), 0.9);
    f.b2 = gaussian_matrix(rng, n_v, 1) * 0.3;
    return f;
  }

  Vector apply(const Vector& v, const Vector& c, const Vector& eps) const {
    return u * (w_v * v + w_c * c + b1).array().tanh().matrix() + b2 + eps;
  }
};

// The maps shared by every sequence of a dataset, drawn once from the
// spec seed.
struct ProcessMaps {
  ActionTransition fc;
  VisualTransition fv;
  MixingFunction g;
};

inline ProcessMaps make_process_maps(const GeneratorSpec& spec) {
  Rng rng(rng::derive_seed(spec.seed, "maps", 0));
  ProcessMaps maps;
  maps.fc = ActionTransition::random(spec.n_c, spec.noise_scale_c, rng);
  maps.fv = VisualTransition::random(spec.n_v, spec.n_c, rng);
  maps.g = MixingFunction::random(spec.n_v, spec.d, spec.mixing_depth, rng);
  return maps;
}

// K-1 cut points uniform over all placements with every segment at
// least min_segment_len long (classic stars-and-bars bijection).
inline std::vector<int> sample_boundaries(const GeneratorSpec& spec, Rng& rng) {
  const int K = spec.K;
  if (K == 1) return {};
  const int slack = spec.T - K * spec.min_segment_len;
  const int range = slack + K - 1;  // distinct draws from {1..range}
  std::vector<int> draws(K - 1);
  while (true) {
    for (int i = 0; i < K - 1; ++i)
      draws[i] = 1 + static_cast<int>(rng.uniform_int(range));
    std::sort(draws.begin(), draws.end());
    if (std::adjacent_find(draws.begin(), draws.end()) == draws.end()) break;
  }
  std::vector<int> cuts(K - 1);
  int cum = 0;
  for (int j = 0; j < K - 1; ++j) {
    const int s_j = draws[j] - j - 1 - cum;  // slack assigned to segment j
    cum += s_j;
    cuts[j] = (j == 0 ? 0 : cuts[j - 1]) + spec.min_segment_len + s_j;
  }
  return cuts;
}

inline std::vector<int> regimes_from_cuts(int T, const std::vector<int>& cuts) {
  std::vector<int> regimes(T);
  int block = 0;
  for (int t = 0; t < T; ++t) {
    while (block < static_cast<int>(cuts.size()) && t >= cuts[block]) ++block;
    regimes[t] = block;
  }
  return regimes;
}

inline std::pair<Matrix, std::vector<int>> generate_action_latents(
    const GeneratorSpec& spec, const ProcessMaps* shared_maps = nullptr) {
  spec.validate();
  ProcessMaps local;
  if (!shared_maps) {
    local = make_process_maps(spec);
    shared_maps = &local;
  }
  Rng brng(rng::derive_seed(spec.seed, "boundaries", 0));
  Rng crng(rng::derive_seed(spec.seed, "cnoise", 0));
  const auto cuts = sample_boundaries(spec, brng);
  const auto regimes = regimes_from_cuts(spec.T, cuts);

  std::vector<Vector> block_values;
  Vector c0(spec.n_c);
  for (int i = 0; i < spec.n_c; ++i) c0(i) = crng.normal();
  block_values.push_back(c0);
  for (int j = 1; j < spec.K; ++j) {
    Vector eps(spec.n_c);
    for (int i = 0; i < spec.n_c; ++i) eps(i) = crng.normal(0.0, spec.noise_scale_c);
    block_values.push_back(shared_maps->fc.apply(block_values.back(), eps));
  }
  Matrix action(spec.T, spec.n_c);
  for (int t = 0; t < spec.T; ++t) action.row(t) = block_values[regimes[t]].transpose();
  return {std::move(action), regimes};
}

inline Matrix generate_visual_latents(const Matrix& action, const GeneratorSpec& spec,
                                      const ProcessMaps* shared_maps = nullptr) {
  require(action.rows() == spec.T, "generate_visual_latents: action has wrong length");
  require(action.cols() == spec.n_c, "generate_visual_latents: action width mismatch");
  ProcessMaps local;
  if (!shared_maps) {
    local = make_process_maps(spec);
    shared_maps = &local;
  }
  Rng vrng(rng::derive_seed(spec.seed, "vnoise", 0));
  Matrix visual(spec.T, spec.n_v);
  Vector v = Vector::Zero(spec.n_v);
  for (int t = 0; t < spec.T; ++t) {
    Vector eps(spec.n_v);
    for (int i = 0; i < spec.n_v; ++i) eps(i) = vrng.normal(0.0, spec.noise_scale_v);
    v = shared_maps->fv.apply(v, action.row(t).transpose(), eps);
    visual.row(t) = v.transpose();
  }
  return visual;
}

inline FeatureSequence mix_observations(const Matrix& visual, const MixingFunction& g) {
  return FeatureSequence(g.apply(visual));
}

// Round-robin classes over the regime blocks; adjacent blocks always
// differ because the inventory has at least two entries.
inline std::pair<std::vector<int>, Transcript> derive_supervision(
    const std::vector<int>& regimes, const std::vector<int>& class_inventory) {
  require(!regimes.empty(), "derive_supervision: empty regimes");
  const int K = regimes.back() + 1;
  require(K == 1 || class_inventory.size() >= 2,
          "derive_supervision: need at least 2 classes for K >= 2");
  require(!class_inventory.empty(), "derive_supervision: empty class inventory");
  std::vector<int> transcript_ids(K);
  for (int j = 0; j < K; ++j)
    transcript_ids[j] = class_inventory[j % class_inventory.size()];
  std::vector<int> labels(regimes.size());
  for (size_t t = 0; t < regimes.size(); ++t) labels[t] = transcript_ids[regimes[t]];
  return {std::move(labels), Transcript(std::move(transcript_ids))};
}

struct SyntheticSequence {
  FeatureSequence features;
  Transcript transcript;
  std::vector<int> frame_labels;
  LatentPair latents;
};

inline std::vector<SyntheticSequence> generate_dataset(
    const GeneratorSpec& spec, int count, const std::vector<int>& class_inventory) {
  spec.validate();
  require(count >= 0, "generate_dataset: negative count");
  const ProcessMaps maps = make_process_maps(spec);
  std::vector<SyntheticSequence> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    GeneratorSpec seq_spec = spec;
    seq_spec.seed = rng::derive_seed(spec.seed, "synth", static_cast<std::uint64_t>(i));
    auto [action, regimes] = generate_action_latents(seq_spec, &maps);
    Matrix visual = generate_visual_latents(action, seq_spec, &maps);
    auto features = mix_observations(visual, maps.g);
    auto [labels, transcript] = derive_supervision(regimes, class_inventory);
    SyntheticSequence s{std::move(features), std::move(transcript), std::move(labels),
                        LatentPair(std::move(visual), std::move(action), regimes)};
    out.push_back(std::move(s));
  }
  return out;
}

// Slowness witness: total variation of the rowwise-normalized
// trajectory (sum of per-step mean-absolute changes).
inline double normalized_total_variation(const Matrix& m) {
  if (m.rows() < 2) return 0.0;
  Matrix bar(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    bar.row(r) = m.row(r) / (norm < 1e-8 ? norm + 1e-8 : norm);
  }
  double tv = 0.0;
  for (Eigen::Index t = 0; t + 1 < m.rows(); ++t)
    tv += (bar.row(t + 1) - bar.row(t)).cwiseAbs().mean();
  return tv;
}

// Write one split in the ingest formats, with latent sidecars.
inline void write_dataset(const std::filesystem::path& dir, const std::string& split_name,
                          const std::vector<SyntheticSequence>& seqs,
                          const ingest::ClassMap& classes) {
  std::filesystem::create_directories(dir);
  ingest::write_class_map(dir / "classes.txt", classes);
  std::vector<ingest::IndexEntry> entries;
  for (size_t i = 0; i < seqs.size(); ++i) {
    const std::string id = split_name + "_" + std::to_string(i);
    ingest::IndexEntry e{id, dir / (id + ".hseq"), dir / (id + ".labels"),
                         dir / (id + ".transcript")};
    ingest::write_features(e.feature_path, seqs[i].features);
    ingest::write_names(e.label_path, seqs[i].frame_labels, classes);
    ingest::write_names(e.transcript_path, seqs[i].transcript.entries, classes);
    ingest::write_matrix(dir / (id + ".hseq.lat.v"), seqs[i].latents.visual);
    ingest::write_matrix(dir / (id + ".hseq.lat.c"), seqs[i].latents.action);
    ingest::write_regimes(dir / (id + ".hseq.regimes"), *seqs[i].latents.regimes);
    entries.push_back(std::move(e));
  }
  ingest::write_split_index(dir / (split_name + ".index"), entries);
}

}  // namespace hal::synthgen
