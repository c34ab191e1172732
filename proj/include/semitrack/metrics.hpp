#pragma once

// Video instance segmentation AP/AR over spatio-temporal mask IoU, and
// CLEAR-MOT style MOTA with mask-IoU gating.

#include <map>
#include <optional>
#include <vector>

#include "semitrack/grid_assign.hpp"

namespace semitrack {

using TrackMasks = std::vector<std::optional<Mask>>;  // per frame; nullopt = absent

struct GtTrack {
  int track_id = 0;
  int category = 0;
  TrackMasks frames;
};

struct PredTrack {
  int track_id = 0;
  int category = 0;
  double confidence = 1.0;
  TrackMasks frames;
};

/// sum_t |a_t n b_t| / sum_t |a_t u b_t|; absent frames are empty masks.
double st_iou(const TrackMasks& a, const TrackMasks& b);

struct VideoTracks {
  std::vector<PredTrack> preds;
  std::vector<GtTrack> gts;
};

std::vector<double> default_iou_thresholds();  // 0.50:0.05:0.95

struct EvalReport {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar1 = 0.0;
  double ar10 = 0.0;
  std::optional<double> mota;
  std::map<int, double> per_class_ap;
};

/// Confidence-ordered one-to-one matching of predictions to ground truth
/// within a video and category. A prediction is a true positive when it can
/// join the matching without unmatching an earlier true positive (earlier
/// gts may be re-routed along an augmenting path), so the returned flags are
/// the lexicographically largest achievable in the given order.
std::vector<bool> match_predictions(const std::vector<const PredTrack*>& preds_by_confidence,
                                    const std::vector<const GtTrack*>& gts, double iou_threshold);

/// AP over the thresholds (101-point interpolated), AP50, AP75, AR1, AR10.
EvalReport video_ap(const std::vector<VideoTracks>& videos,
                    const std::vector<double>& iou_thresholds = default_iou_thresholds());

/// Area under the interpolated precision-recall curve sampled at 101
/// recall points, given TP flags in descending-confidence order.
double interpolated_ap(const std::vector<bool>& tp_sorted, int num_gt);

struct LabeledMask {
  int id = 0;
  Mask mask;
};
using FrameLabels = std::vector<LabeledMask>;

struct MotaResult {
  double mota = 0.0;
  int false_negatives = 0;
  int false_positives = 0;
  int id_switches = 0;
  int total_gt = 0;
  int matches = 0;
  /// Newly entered ground-truth objects whose first match is a hypothesis
  /// already matched to a different ground-truth object earlier.
  int id_merges = 0;
  int new_objects = 0;
};

/// CLEAR-MOT with per-frame mask IoU >= iou_gate matching; correspondences
/// from the previous frame are kept while still valid.
MotaResult mota(const std::vector<FrameLabels>& pred_frames, const std::vector<FrameLabels>& gt_frames,
                double iou_gate = 0.5);

MotaResult mota(const std::vector<PredTrack>& preds, const std::vector<GtTrack>& gts, double iou_gate = 0.5);

/// Pools the error counts of several videos into one score.
MotaResult pool_mota(const std::vector<MotaResult>& parts);

}  // namespace semitrack
