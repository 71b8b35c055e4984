#pragma once

// Transcript-constrained optimal decoding. viterbi_align maximizes the
// summed frame log-posteriors over all monotone labelings that realize
// the transcript with every segment at least min_segment_len long.
// DP over (entry m, prefix length t) runs in O(T*M) using running
// maxima over cut candidates. Posteriors are floored at 1e-12 before
// the log so -inf never propagates.
//
// Tie-break: the backpointer at every DP state keeps the earliest
// optimal cut, so boundaries are extracted last-to-first, each as
// early as possible among optimal completions. This makes decoding
// deterministic.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hal/core.hpp"

namespace hal::align {

using core::PosteriorMatrix;
using core::Transcript;
using core::require;

struct AlignmentResult {
  std::vector<int> labels;      // length T
  std::vector<int> boundaries;  // M-1 cut frames (start of each new segment)
  double score = 0.0;
};

inline AlignmentResult viterbi_align(const PosteriorMatrix& posteriors,
                                     const Transcript& transcript, int min_segment_len) {
  const int T = static_cast<int>(posteriors.T());
  const int M = static_cast<int>(transcript.size());
  const int U = static_cast<int>(posteriors.num_classes());
  require(min_segment_len >= 1, "viterbi_align: min_segment_len must be >= 1");
  for (int a : transcript.entries)
    require(a < U, "viterbi_align: transcript id " + std::to_string(a) + " out of range");
  if (static_cast<long>(M) * min_segment_len > T)
    throw std::invalid_argument("transcript does not fit");

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // cum[m][t] = sum over frames [0, t) of log p(a_m | frame)
  std::vector<std::vector<double>> cum(M, std::vector<double>(T + 1, 0.0));
  for (int m = 0; m < M; ++m)
    for (int t = 0; t < T; ++t)
      cum[m][t + 1] =
          cum[m][t] + std::log(std::max(posteriors.probs(t, transcript.entries[m]), 1e-12));

  // dp[m][t]: best score assigning frames [0, t) to entries [0, m)
  std::vector<std::vector<double>> dp(M + 1, std::vector<double>(T + 1, kNegInf));
  std::vector<std::vector<int>> bp(M + 1, std::vector<int>(T + 1, -1));
  dp[0][0] = 0.0;
  for (int m = 1; m <= M; ++m) {
    double best = kNegInf;
    int best_t = -1;
    // candidate cuts t' enter as t grows; keep the earliest argmax
    for (int t = m * min_segment_len; t <= T; ++t) {
      const int cand = t - min_segment_len;  // newest eligible cut
      if (dp[m - 1][cand] > kNegInf) {
        const double g = dp[m - 1][cand] - cum[m - 1][cand];
        if (g > best) {
          best = g;
          best_t = cand;
        }
      }
      if (best > kNegInf) {
        dp[m][t] = best + cum[m - 1][t];
        bp[m][t] = best_t;
      }
    }
  }
  require(dp[M][T] > kNegInf, "viterbi_align: no feasible alignment");

  AlignmentResult res;
  res.score = dp[M][T];
  res.boundaries.resize(M - 1);
  int t = T;
  for (int m = M; m >= 1; --m) {
    const int cut = bp[m][t];
    if (m > 1) res.boundaries[m - 2] = cut;
    t = cut;
  }
  res.labels.resize(T);
  int seg = 0;
  for (int f = 0; f < T; ++f) {
    while (seg < M - 1 && f >= res.boundaries[seg]) ++seg;
    res.labels[f] = transcript.entries[seg];
  }
  return res;
}

// Exhaustive oracle: every valid monotone labeling, exactly once.
inline std::vector<std::vector<int>> enumerate_alignments(int T, const Transcript& transcript,
                                                          int min_segment_len) {
  const int M = static_cast<int>(transcript.size());
  require(T <= 16 && M <= 4, "enumerate_alignments: guard violated (T <= 16, M <= 4)");
  require(min_segment_len >= 1, "enumerate_alignments: min_segment_len must be >= 1");
  if (static_cast<long>(M) * min_segment_len > T)
    throw std::invalid_argument("transcript does not fit");

  std::vector<std::vector<int>> out;
  std::vector<int> lens(M, 0);
  const std::function<void(int, int)> rec = [&](int m, int used) {
    if (m == M - 1) {
      lens[m] = T - used;
      if (lens[m] < min_segment_len) return;
      std::vector<int> labels;
      labels.reserve(T);
      for (int i = 0; i < M; ++i)
        labels.insert(labels.end(), lens[i], transcript.entries[i]);
      out.push_back(std::move(labels));
      return;
    }
    for (int len = min_segment_len; used + len + (M - 1 - m) * min_segment_len <= T; ++len) {
      lens[m] = len;
      rec(m + 1, used + len);
    }
  };
  rec(0, 0);
  return out;
}

// Viterbi labels plus a confidence mask that drops frames within
// boundary_margin frames of every internal boundary: for a boundary at
// frame b the window [b - margin, b + margin - 1] is masked out.
inline std::pair<std::vector<int>, std::vector<bool>> pseudo_labels(
    const PosteriorMatrix& posteriors, const Transcript& transcript, int min_segment_len,
    int boundary_margin) {
  auto res = viterbi_align(posteriors, transcript, min_segment_len);
  const int T = static_cast<int>(res.labels.size());
  std::vector<bool> mask(T, true);
  for (int b : res.boundaries)
    for (int t = std::max(0, b - boundary_margin);
         t <= std::min(T - 1, b + boundary_margin - 1); ++t)
      mask[t] = false;
  return {std::move(res.labels), std::move(mask)};
}

}  // namespace hal::align
