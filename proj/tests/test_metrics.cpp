#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hal/metrics.hpp"
#include "hal/rng.hpp"

using namespace hal;

TEST_CASE("mof") {
  CHECK(metrics::mof({0, 1, 2}, {0, 1, 2}) == 1.0);
  CHECK(metrics::mof({0, 0, 0}, {1, 1, 1}) == 0.0);
  CHECK(metrics::mof({0, 0, 1, 1}, {0, 1, 1, 1}) == doctest::Approx(0.75));
  CHECK_THROWS(metrics::mof({0}, {0, 1}));
}

TEST_CASE("mof_bg") {
  SUBCASE("all-background gt is vacuous") {
    long frames = -1;
    CHECK(metrics::mof_bg({1, 2, 1}, {0, 0, 0}, 0, &frames) == 1.0);
    CHECK(frames == 0);
  }
  SUBCASE("perfect prediction") { CHECK(metrics::mof_bg({0, 1, 2}, {0, 1, 2}, 0) == 1.0); }
  SUBCASE("background frames excluded") {
    // pred [bg,A,A,B] vs gt [bg,A,B,B]: evaluated frames 1,2,3 -> 2/3
    CHECK(metrics::mof_bg({0, 1, 1, 2}, {0, 1, 2, 2}, 0) == doctest::Approx(2.0 / 3));
  }
  SUBCASE("no background equals mof") {
    std::vector<int> pred{1, 2, 1, 1}, gt{1, 1, 1, 2};
    CHECK(metrics::mof_bg(pred, gt, 0) == doctest::Approx(metrics::mof(pred, gt)));
  }
}

TEST_CASE("iou_iod hand instances") {
  using core::SegmentList;
  SUBCASE("perfect match") {
    SegmentList gt({{1, 0, 4}, {2, 4, 8}});
    auto [iou, iod] = metrics::iou_iod(gt, gt, 0);
    CHECK(iou == 1.0);
    CHECK(iod == 1.0);
  }
  SUBCASE("split prediction") {
    // gt (A,0,4); pred (A,0,2),(B,2,4): IoU = 2/4, IoD = 2/2
    SegmentList gt({{1, 0, 4}});
    SegmentList pred({{1, 0, 2}, {2, 2, 4}});
    auto [iou, iod] = metrics::iou_iod(pred, gt, 0);
    CHECK(iou == doctest::Approx(0.5));
    CHECK(iod == doctest::Approx(1.0));
  }
  SUBCASE("missing class scores zero") {
    SegmentList gt({{1, 0, 4}});
    SegmentList pred({{2, 0, 4}});
    auto [iou, iod] = metrics::iou_iod(pred, gt, 0);
    CHECK(iou == 0.0);
    CHECK(iod == 0.0);
  }
  SUBCASE("tiling mismatch errors") {
    SegmentList gt({{1, 0, 4}});
    SegmentList pred({{1, 0, 5}});
    CHECK_THROWS(metrics::iou_iod(pred, gt, 0));
  }
  SUBCASE("ties go to the earliest prediction") {
    // two class-1 predictions intersect gt equally; earliest wins, and
    // its shorter length changes IoD
    SegmentList gt({{2, 0, 2}, {1, 2, 6}, {2, 6, 10}});
    SegmentList pred({{1, 0, 4}, {2, 4, 6}, {1, 6, 8}, {2, 8, 10}});
    // gt segment (1,2,6): pred (1,0,4) inter 2, pred (1,6,8) inter 0 -> first
    auto scores = metrics::per_segment_scores(pred, gt, 0);
    REQUIRE(scores.size() == 3);  // class-2 gt segments are non-bg here too
  }
}

TEST_CASE("IoD >= IoU per segment on random segmentations") {
  rng::Rng r(5);
  for (int rep = 0; rep < 1000; ++rep) {
    const int T = 4 + static_cast<int>(r.uniform_int(40));
    auto random_labels = [&](int classes) {
      std::vector<int> lab(T);
      for (int t = 0; t < T; ++t) lab[t] = static_cast<int>(r.uniform_int(classes));
      return lab;
    };
    auto pred = core::labels_to_segments(random_labels(3));
    auto gt = core::labels_to_segments(random_labels(3));
    for (const auto& s : metrics::per_segment_scores(pred, gt, 0)) {
      CHECK(s.iod >= s.iou - 1e-12);
      CHECK(s.iou >= 0.0);
      CHECK(s.iod <= 1.0);
    }
  }
}

TEST_CASE("metrics invariant to consistent class permutation") {
  rng::Rng r(19);
  const int T = 30;
  std::vector<int> pred(T), gt(T);
  for (int t = 0; t < T; ++t) {
    pred[t] = static_cast<int>(r.uniform_int(3));
    gt[t] = static_cast<int>(r.uniform_int(3));
  }
  const std::vector<int> perm{2, 0, 1};
  std::vector<int> pred_p(T), gt_p(T);
  for (int t = 0; t < T; ++t) {
    pred_p[t] = perm[pred[t]];
    gt_p[t] = perm[gt[t]];
  }
  CHECK(metrics::mof(pred, gt) == metrics::mof(pred_p, gt_p));
  CHECK(metrics::mof_bg(pred, gt, 0) == metrics::mof_bg(pred_p, gt_p, perm[0]));
  auto [iou_a, iod_a] =
      metrics::iou_iod(core::labels_to_segments(pred), core::labels_to_segments(gt), 0);
  auto [iou_b, iod_b] =
      metrics::iou_iod(core::labels_to_segments(pred_p), core::labels_to_segments(gt_p), perm[0]);
  CHECK(iou_a == doctest::Approx(iou_b));
  CHECK(iod_a == doctest::Approx(iod_b));
}

TEST_CASE("evaluate_corpus pooling") {
  SUBCASE("single pair equals per-video values") {
    metrics::LabeledPair pair{"v0", {0, 1, 1, 2}, {0, 1, 2, 2}};
    auto rep = metrics::evaluate_corpus({pair}, 0);
    REQUIRE(rep.per_video.size() == 1);
    CHECK(rep.mof == rep.per_video[0].mof);
    CHECK(rep.mof_bg == rep.per_video[0].mof_bg);
    CHECK(rep.iou == doctest::Approx(rep.per_video[0].iou));
    CHECK(rep.iod == doctest::Approx(rep.per_video[0].iod));
  }
  SUBCASE("two identical pairs match the single value") {
    metrics::LabeledPair pair{"v0", {0, 1, 1}, {0, 1, 2}};
    auto one = metrics::evaluate_corpus({pair}, 0);
    auto two = metrics::evaluate_corpus({pair, pair}, 0);
    CHECK(two.mof == doctest::Approx(one.mof));
    CHECK(two.iou == doctest::Approx(one.iou));
  }
  SUBCASE("unequal lengths pool frame-weighted, checked vs loop oracle") {
    metrics::LabeledPair a{"a", {0, 1}, {0, 0}};        // 1 of 2 correct
    metrics::LabeledPair b{"b", {1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 0}};  // 5 of 6
    auto rep = metrics::evaluate_corpus({a, b}, 9);
    long correct = 0, total = 0;
    for (const auto& pr : {a, b})
      for (size_t t = 0; t < pr.gt.size(); ++t) {
        correct += pr.pred[t] == pr.gt[t];
        ++total;
      }
    CHECK(rep.mof == doctest::Approx(static_cast<double>(correct) / total));
    CHECK(rep.frames == total);
  }
  SUBCASE("csv has one row per video plus corpus") {
    metrics::LabeledPair pair{"v0", {0, 1}, {0, 1}};
    auto rep = metrics::evaluate_corpus({pair, pair, pair}, 0);
    const auto csv = metrics::to_csv(rep);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 3 videos + corpus
  }
}
