#pragma once

// Evaluation metrics: MoF, MoF-bg, IoU, IoD.
//
// IoU/IoD convention (ISBA-style): for every non-background ground
// truth segment, match the same-class predicted segment with maximal
// frame intersection (ties -> earliest); no match means 0. Corpus
// values average unweighted over all ground-truth segments, while
// MoF/MoF-bg pool frames across the corpus.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "hal/core.hpp"

namespace hal::metrics {

using core::SegmentList;
using core::require;

inline double mof(const std::vector<int>& pred, const std::vector<int>& gt) {
  require(pred.size() == gt.size(), "mof: length mismatch");
  require(!pred.empty(), "mof: empty input");
  long correct = 0;
  for (size_t t = 0; t < pred.size(); ++t) correct += pred[t] == gt[t];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

// MoF over frames whose ground truth is not background. A video with
// no such frame scores 1.0 (vacuous) and contributes zero weight to
// corpus pooling.
inline double mof_bg(const std::vector<int>& pred, const std::vector<int>& gt, int bg_id,
                     long* evaluated_frames = nullptr) {
  require(pred.size() == gt.size(), "mof_bg: length mismatch");
  long correct = 0, total = 0;
  for (size_t t = 0; t < pred.size(); ++t) {
    if (gt[t] == bg_id) continue;
    ++total;
    correct += pred[t] == gt[t];
  }
  if (evaluated_frames) *evaluated_frames = total;
  if (total == 0) return 1.0;
  return static_cast<double>(correct) / static_cast<double>(total);
}

struct SegmentScore {
  double iou = 0.0;
  double iod = 0.0;
};

inline std::vector<SegmentScore> per_segment_scores(const SegmentList& pred_segs,
                                                    const SegmentList& gt_segs, int bg_id) {
  require(pred_segs.total_frames() == gt_segs.total_frames(),
          "iou_iod: segmentations tile different ranges");
  std::vector<SegmentScore> scores;
  for (const auto& s : gt_segs.segments) {
    if (s.class_id == bg_id) continue;
    int best_inter = 0;
    const core::Segment* best = nullptr;
    for (const auto& p : pred_segs.segments) {
      if (p.class_id != s.class_id) continue;
      const int inter = std::max(0, std::min(s.end, p.end) - std::max(s.start, p.start));
      if (!best || inter > best_inter) {  // ties keep the earliest
        best_inter = inter;
        best = &p;
      }
    }
    SegmentScore sc;
    if (best) {
      const int uni = (s.end - s.start) + (best->end - best->start) - best_inter;
      sc.iou = static_cast<double>(best_inter) / uni;
      sc.iod = static_cast<double>(best_inter) / (best->end - best->start);
    }
    scores.push_back(sc);
  }
  return scores;
}

inline std::pair<double, double> iou_iod(const SegmentList& pred_segs,
                                         const SegmentList& gt_segs, int bg_id) {
  auto scores = per_segment_scores(pred_segs, gt_segs, bg_id);
  if (scores.empty()) return {1.0, 1.0};  // vacuous: no non-background gt segment
  double iou = 0.0, iod = 0.0;
  for (const auto& s : scores) {
    iou += s.iou;
    iod += s.iod;
  }
  return {iou / scores.size(), iod / scores.size()};
}

struct VideoEval {
  std::string video_id;
  double mof = 0.0, mof_bg = 0.0, iou = 0.0, iod = 0.0;
  long frames = 0;
  long frames_bg_eval = 0;  // frames entering MoF-bg; 0 marks a vacuous video
  long gt_segments = 0;     // non-background gt segments entering IoU/IoD
};

struct EvalReport {
  double mof = 0.0, mof_bg = 0.0, iou = 0.0, iod = 0.0;
  long frames = 0;
  long frames_bg_eval = 0;
  long gt_segments = 0;
  long vacuous_bg_videos = 0;
  std::vector<VideoEval> per_video;
};

struct LabeledPair {
  std::string video_id;
  std::vector<int> pred;
  std::vector<int> gt;
};

inline EvalReport evaluate_corpus(const std::vector<LabeledPair>& pairs, int bg_id) {
  EvalReport rep;
  long mof_correct = 0, bg_correct = 0;
  double iou_sum = 0.0, iod_sum = 0.0;
  for (const auto& pr : pairs) {
    require(pr.pred.size() == pr.gt.size(), "evaluate_corpus: length mismatch for " + pr.video_id);
    VideoEval ve;
    ve.video_id = pr.video_id;
    ve.frames = static_cast<long>(pr.gt.size());
    long correct = 0, correct_bg = 0;
    for (size_t t = 0; t < pr.gt.size(); ++t) {
      const bool hit = pr.pred[t] == pr.gt[t];
      correct += hit;
      if (pr.gt[t] != bg_id) {
        ++ve.frames_bg_eval;
        correct_bg += hit;
      }
    }
    ve.mof = ve.frames ? static_cast<double>(correct) / ve.frames : 0.0;
    ve.mof_bg = ve.frames_bg_eval ? static_cast<double>(correct_bg) / ve.frames_bg_eval : 1.0;
    const auto pred_segs = core::labels_to_segments(pr.pred);
    const auto gt_segs = core::labels_to_segments(pr.gt);
    auto scores = per_segment_scores(pred_segs, gt_segs, bg_id);
    ve.gt_segments = static_cast<long>(scores.size());
    if (scores.empty()) {
      ve.iou = ve.iod = 1.0;
    } else {
      for (const auto& s : scores) {
        ve.iou += s.iou;
        ve.iod += s.iod;
        iou_sum += s.iou;
        iod_sum += s.iod;
      }
      ve.iou /= scores.size();
      ve.iod /= scores.size();
    }
    mof_correct += correct;
    bg_correct += correct_bg;
    rep.frames += ve.frames;
    rep.frames_bg_eval += ve.frames_bg_eval;
    rep.gt_segments += ve.gt_segments;
    if (ve.frames_bg_eval == 0) ++rep.vacuous_bg_videos;
    rep.per_video.push_back(std::move(ve));
  }
  rep.mof = rep.frames ? static_cast<double>(mof_correct) / rep.frames : 0.0;
  rep.mof_bg = rep.frames_bg_eval ? static_cast<double>(bg_correct) / rep.frames_bg_eval : 1.0;
  rep.iou = rep.gt_segments ? iou_sum / rep.gt_segments : 1.0;
  rep.iod = rep.gt_segments ? iod_sum / rep.gt_segments : 1.0;
  return rep;
}

inline std::string to_csv(const EvalReport& rep) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "video_id,mof,mof_bg,iou,iod,frames,frames_bg_eval,gt_segments\n";
  for (const auto& v : rep.per_video)
    out << v.video_id << "," << v.mof << "," << v.mof_bg << "," << v.iou << "," << v.iod
        << "," << v.frames << "," << v.frames_bg_eval << "," << v.gt_segments << "\n";
  out << "CORPUS," << rep.mof << "," << rep.mof_bg << "," << rep.iou << "," << rep.iod << ","
      << rep.frames << "," << rep.frames_bg_eval << "," << rep.gt_segments << "\n";
  return out.str();
}

inline std::string to_table(const EvalReport& rep) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "videos: " << rep.per_video.size() << "  frames: " << rep.frames;
  if (rep.vacuous_bg_videos)
    out << "  (vacuous MoF-bg videos: " << rep.vacuous_bg_videos << ")";
  out << "\n";
  out << "MoF     " << rep.mof << "\n";
  out << "MoF-bg  " << rep.mof_bg << "\n";
  out << "IoU     " << rep.iou << "\n";
  out << "IoD     " << rep.iod << "\n";
  return out.str();
}

}  // namespace hal::metrics
