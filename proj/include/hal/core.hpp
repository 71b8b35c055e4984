#pragma once

// Shared domain types. All types are immutable values after
// construction; the free functions are pure.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hal/rng.hpp"

namespace hal::core {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// T x d per-frame feature matrix (the backbone input).
struct FeatureSequence {
  Matrix frames;
  std::optional<double> frame_rate_hint;

  FeatureSequence() = default;
  explicit FeatureSequence(Matrix m, std::optional<double> rate = std::nullopt)
      : frames(std::move(m)), frame_rate_hint(rate) {
    require(frames.rows() >= 1 && frames.cols() >= 1,
            "FeatureSequence: need T >= 1 and d >= 1");
    require(frames.allFinite(), "FeatureSequence: nonfinite entry");
    if (frame_rate_hint)
      require(*frame_rate_hint > 0, "FeatureSequence: frame rate must be positive");
  }

  Eigen::Index T() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

// Aligned visual/action latent trajectories, optionally with the
// ground-truth segment index per frame.
struct LatentPair {
  Matrix visual;  // T x n_v
  Matrix action;  // T x n_c
  std::optional<std::vector<int>> regimes;

  LatentPair() = default;
  LatentPair(Matrix v, Matrix c, std::optional<std::vector<int>> reg = std::nullopt)
      : visual(std::move(v)), action(std::move(c)), regimes(std::move(reg)) {
    require(visual.rows() == action.rows(), "LatentPair: visual/action length mismatch");
    require(visual.allFinite() && action.allFinite(), "LatentPair: nonfinite entry");
    if (regimes) {
      require(static_cast<Eigen::Index>(regimes->size()) == visual.rows(),
              "LatentPair: regimes length mismatch");
      // piecewise constant, nondecreasing by blocks
      for (size_t t = 1; t < regimes->size(); ++t)
        require((*regimes)[t] >= (*regimes)[t - 1], "LatentPair: regimes must be nondecreasing");
    }
  }

  Eigen::Index T() const { return visual.rows(); }
};

// Ordered action classes of a video, background included.
struct Transcript {
  std::vector<int> entries;

  Transcript() = default;
  explicit Transcript(std::vector<int> e, bool allow_repeats = false)
      : entries(std::move(e)) {
    require(!entries.empty(), "Transcript: need at least one entry");
    for (int id : entries) require(id >= 0, "Transcript: negative class id");
    if (!allow_repeats) {
      for (size_t i = 1; i < entries.size(); ++i)
        require(entries[i] != entries[i - 1], "Transcript: adjacent repeated class");
    }
  }

  size_t size() const { return entries.size(); }
};

struct Segment {
  int class_id;
  int start;  // inclusive
  int end;    // exclusive

  bool operator==(const Segment&) const = default;
};

// Segments tiling [0, T) with no adjacent same-class pair.
struct SegmentList {
  std::vector<Segment> segments;

  SegmentList() = default;
  explicit SegmentList(std::vector<Segment> segs) : segments(std::move(segs)) {
    require(!segments.empty(), "SegmentList: empty");
    require(segments.front().start == 0, "SegmentList: first segment must start at 0");
    for (size_t i = 0; i < segments.size(); ++i) {
      require(segments[i].end > segments[i].start, "SegmentList: empty segment");
      if (i > 0) {
        require(segments[i].start == segments[i - 1].end,
                "SegmentList: gap or overlap between segments");
        require(segments[i].class_id != segments[i - 1].class_id,
                "SegmentList: adjacent segments share a class");
      }
    }
  }

  int total_frames() const { return segments.back().end; }
};

// Per-frame class posteriors; rows sum to one.
struct PosteriorMatrix {
  Matrix probs;  // T x |U|

  PosteriorMatrix() = default;
  explicit PosteriorMatrix(Matrix p) : probs(std::move(p)) {
    require(probs.rows() >= 1 && probs.cols() >= 1, "PosteriorMatrix: empty");
    require(probs.allFinite(), "PosteriorMatrix: nonfinite entry");
    require((probs.array() >= 0.0).all() && (probs.array() <= 1.0).all(),
            "PosteriorMatrix: entries outside [0,1]");
    for (Eigen::Index t = 0; t < probs.rows(); ++t)
      require(std::abs(probs.row(t).sum() - 1.0) <= 1e-6,
              "PosteriorMatrix: row " + std::to_string(t) + " does not sum to 1");
  }

  Eigen::Index T() const { return probs.rows(); }
  Eigen::Index num_classes() const { return probs.cols(); }
};

// Run-length encode a frame label sequence.
inline SegmentList labels_to_segments(const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("empty label sequence");
  std::vector<Segment> segs;
  int start = 0;
  for (size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      segs.push_back({labels[start], start, static_cast<int>(t)});
      start = static_cast<int>(t);
    }
  }
  return SegmentList(std::move(segs));
}

inline std::vector<int> segments_to_labels(const SegmentList& segs) {
  std::vector<int> labels(segs.total_frames());
  for (const auto& s : segs.segments)
    for (int t = s.start; t < s.end; ++t) labels[t] = s.class_id;
  return labels;
}

using rng::derive_seed;

}  // namespace hal::core
