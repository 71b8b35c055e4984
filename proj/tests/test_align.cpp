#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hal/align.hpp"
#include "hal/rng.hpp"

using namespace hal;
using Matrix = Eigen::MatrixXd;

namespace {

core::PosteriorMatrix random_posteriors(rng::Rng& r, int T, int U) {
  Matrix p(T, U);
  for (int t = 0; t < T; ++t) {
    double sum = 0;
    for (int u = 0; u < U; ++u) {
      p(t, u) = 0.05 + r.uniform();
      sum += p(t, u);
    }
    p.row(t) /= sum;
  }
  return core::PosteriorMatrix(p);
}

double labeling_score(const core::PosteriorMatrix& post, const std::vector<int>& labels) {
  double s = 0;
  for (size_t t = 0; t < labels.size(); ++t)
    s += std::log(std::max(post.probs(t, labels[t]), 1e-12));
  return s;
}

}  // namespace

TEST_CASE("viterbi_align basics") {
  SUBCASE("single-entry transcript labels everything") {
    rng::Rng r(2);
    auto post = random_posteriors(r, 6, 3);
    auto res = align::viterbi_align(post, core::Transcript({1}), 1);
    CHECK(res.labels == std::vector<int>(6, 1));
    CHECK(res.boundaries.empty());
    double expect = 0;
    for (int t = 0; t < 6; ++t) expect += std::log(post.probs(t, 1));
    CHECK(res.score == doctest::Approx(expect));
  }
  SUBCASE("one-hot posteriors are returned exactly with ~0 score") {
    Matrix p = Matrix::Constant(5, 3, 1e-9);
    std::vector<int> truth{0, 0, 2, 2, 1};
    for (int t = 0; t < 5; ++t) p(t, truth[t]) = 1.0 - 2e-9;
    auto res = align::viterbi_align(core::PosteriorMatrix(p), core::Transcript({0, 2, 1}), 1);
    CHECK(res.labels == truth);
    CHECK(std::abs(res.score) < 1e-6);
  }
  SUBCASE("A,A,B,B example places the boundary at 2 and matches brute force") {
    Matrix p(4, 2);
    p << 0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.2, 0.8;
    core::PosteriorMatrix post(p);
    core::Transcript tr({0, 1});
    auto res = align::viterbi_align(post, tr, 1);
    CHECK(res.boundaries == std::vector<int>{2});
    double best = -1e18;
    for (const auto& labeling : align::enumerate_alignments(4, tr, 1))
      best = std::max(best, labeling_score(post, labeling));
    CHECK(res.score == doctest::Approx(best));
  }
  SUBCASE("infeasible transcript errors") {
    rng::Rng r(4);
    auto post = random_posteriors(r, 3, 3);
    CHECK_THROWS_WITH(align::viterbi_align(post, core::Transcript({0, 1}), 2),
                      "transcript does not fit");
  }
  SUBCASE("zero posteriors are floored, not -inf") {
    Matrix p(2, 2);
    p << 1, 0, 1, 0;
    auto res = align::viterbi_align(core::PosteriorMatrix(p), core::Transcript({0, 1}), 1);
    CHECK(res.labels == std::vector<int>{0, 1});
    CHECK(std::isfinite(res.score));
  }
}

TEST_CASE("enumerate_alignments counting oracle") {
  CHECK(align::enumerate_alignments(3, core::Transcript({0, 1}), 1).size() == 2);
  CHECK(align::enumerate_alignments(4, core::Transcript({0, 1}), 2).size() == 1);
  CHECK_THROWS_WITH(align::enumerate_alignments(2, core::Transcript({0, 1, 0}), 1),
                    "transcript does not fit");
  CHECK_THROWS(align::enumerate_alignments(17, core::Transcript({0, 1}), 1));  // guard

  // compositions of T into M parts with min length L: C(T - M*L + M - 1, M - 1)
  CHECK(align::enumerate_alignments(8, core::Transcript({0, 1, 0}), 2).size() == 6);
  CHECK(align::enumerate_alignments(10, core::Transcript({0, 1, 2}), 1).size() == 36);
}

TEST_CASE("viterbi matches exhaustive enumeration on 100 random instances") {
  rng::Rng r(99);
  int done = 0;
  while (done < 100) {
    const int T = 3 + static_cast<int>(r.uniform_int(6));   // 3..8
    const int M = 1 + static_cast<int>(r.uniform_int(3));   // 1..3
    const int U = std::max(2, 1 + static_cast<int>(r.uniform_int(4)));
    const int min_len = 1 + static_cast<int>(r.uniform_int(2));
    if (M * min_len > T) continue;
    ++done;
    std::vector<int> entries(M);
    for (int m = 0; m < M; ++m) {
      int id;
      do {
        id = static_cast<int>(r.uniform_int(U));
      } while (m > 0 && id == entries[m - 1]);
      entries[m] = id;
    }
    core::Transcript tr(entries);
    auto post = random_posteriors(r, T, U);
    auto res = align::viterbi_align(post, tr, min_len);

    double best = -1e18;
    for (const auto& labeling : align::enumerate_alignments(T, tr, min_len))
      best = std::max(best, labeling_score(post, labeling));
    CHECK(res.score == doctest::Approx(best).epsilon(1e-12));
    CHECK(labeling_score(post, res.labels) == doctest::Approx(res.score).epsilon(1e-12));

    // result invariants: transcript realization and min lengths
    auto segs = core::labels_to_segments(res.labels);
    REQUIRE(segs.segments.size() == static_cast<size_t>(M));
    for (int m = 0; m < M; ++m) {
      CHECK(segs.segments[m].class_id == entries[m]);
      CHECK(segs.segments[m].end - segs.segments[m].start >= min_len);
    }
  }
}

TEST_CASE("tie-break picks the earliest boundaries") {
  // uniform posteriors tie every alignment; the documented rule picks
  // boundaries last-to-first, each as early as possible
  Matrix p = Matrix::Constant(5, 2, 0.5);
  auto res = align::viterbi_align(core::PosteriorMatrix(p), core::Transcript({0, 1}), 1);
  CHECK(res.boundaries == std::vector<int>{1});

  Matrix p3 = Matrix::Constant(6, 3, 1.0 / 3);
  auto res3 = align::viterbi_align(core::PosteriorMatrix(p3), core::Transcript({0, 1, 2}), 1);
  CHECK(res3.boundaries == std::vector<int>{1, 2});

  auto res_min = align::viterbi_align(core::PosteriorMatrix(p3), core::Transcript({0, 1, 2}), 2);
  CHECK(res_min.boundaries == std::vector<int>{2, 4});
}

TEST_CASE("adding a constant to log posteriors keeps the argmax") {
  rng::Rng r(7);
  auto post = random_posteriors(r, 8, 3);
  core::Transcript tr({0, 2, 1});
  auto base = align::viterbi_align(post, tr, 1);
  // scaling all posteriors by a constant shifts every log by the same
  // amount: emulate by scaling probabilities (rows no longer sum to 1,
  // so bypass validation through the raw DP on a scaled copy)
  Matrix scaled = post.probs * 0.25;
  core::PosteriorMatrix fake;
  fake.probs = scaled;  // bypasses row-sum validation on purpose
  auto shifted = align::viterbi_align(fake, tr, 1);
  CHECK(shifted.labels == base.labels);
  CHECK(shifted.score ==
        doctest::Approx(base.score + 8 * std::log(0.25)).epsilon(1e-10));
}

TEST_CASE("pseudo_labels mask windows") {
  SUBCASE("zero margin keeps every frame") {
    rng::Rng r(13);
    auto post = random_posteriors(r, 7, 2);
    auto [labels, mask] = align::pseudo_labels(post, core::Transcript({0, 1}), 1, 0);
    CHECK(std::count(mask.begin(), mask.end(), true) == 7);
  }
  SUBCASE("boundary at 5 with margin 2 masks frames 3..6") {
    Matrix p = Matrix::Constant(10, 2, 1e-9);
    for (int t = 0; t < 10; ++t) p(t, t < 5 ? 0 : 1) = 1.0 - 1e-9;
    auto [labels, mask] = align::pseudo_labels(core::PosteriorMatrix(p),
                                               core::Transcript({0, 1}), 1, 2);
    std::vector<bool> expect(10, true);
    expect[3] = expect[4] = expect[5] = expect[6] = false;
    CHECK(mask == expect);
  }
  SUBCASE("margin >= T masks everything") {
    Matrix p = Matrix::Constant(6, 2, 0.5);
    auto [labels, mask] = align::pseudo_labels(core::PosteriorMatrix(p),
                                               core::Transcript({0, 1}), 1, 6);
    CHECK(std::count(mask.begin(), mask.end(), false) == 6);
  }
}
