#pragma once

// Online instance association against a memory bank of track prototypes.
//
// Per frame: cosine similarity of detection embeddings to bank prototypes,
// bi-directional softmax, optional weighted post-processing fusion, then a
// one-to-one thresholded assignment. Unmatched detections start new tracks;
// matched prototypes are updated with momentum and renormalized.

#include <optional>
#include <vector>

#include "semitrack/grid_assign.hpp"
#include "semitrack/matrix.hpp"

namespace semitrack {

struct Detection {
  int category = 0;
  double score = 1.0;
  BBox bbox;
  Mask mask;
  std::vector<double> embedding;
};

struct BankEntry {
  int track_id = 0;
  std::vector<double> prototype;  // unit norm
  int category = 0;
  BBox bbox;
  Mask mask;
  int last_seen_frame = 0;
};

struct MemoryBank {
  std::vector<BankEntry> entries;
};

enum class MomentumMode {
  KeepOld,    // m * old + (1 - m) * new
  WeightNew,  // (1 - m) * old + m * new
};

enum class AssignmentMode { Greedy, Hungarian };

struct TrackerConfig {
  double new_object_threshold = 0.3;
  double momentum = 0.7;
  MomentumMode momentum_mode = MomentumMode::KeepOld;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  bool use_bi_softmax = true;
  bool use_postprocess = false;
  AssignmentMode assignment = AssignmentMode::Greedy;
  /// Multiplies the cosine similarity before the softmaxes.
  double similarity_scale = 1.0;
  std::optional<int> max_age;

  void validate() const;
};

/// Cosine similarity, N detections x M bank entries.
Matrix similarity(const std::vector<Detection>& dets, const MemoryBank& bank);

/// Elementwise mean of the row-wise and column-wise softmax.
Matrix bi_softmax(const Matrix& sim);

/// s(n,m) = score(n,m) + alpha c(n) + beta IoU(b_n, b_m) + gamma [c_n == c_m]
Matrix fuse_scores(const Matrix& scores, const std::vector<Detection>& dets, const MemoryBank& bank,
                   const TrackerConfig& cfg);

/// The score matrix the association thresholds, per the config switches.
Matrix association_scores(const std::vector<Detection>& dets, const MemoryBank& bank, const TrackerConfig& cfg);

struct Association {
  std::vector<int> track_ids;   // per detection
  std::vector<int> bank_index;  // matched entry or -1 for a new track
  std::vector<double> scores;   // score of the accepted match, or the best rejected score
};

/// One-to-one association; new ids are minted from next_id in detection order.
Association associate(const std::vector<Detection>& dets, const MemoryBank& bank, const TrackerConfig& cfg,
                      int& next_id);

/// Same as above on a precomputed score matrix (N x M).
Association associate_scores(const Matrix& scores, const MemoryBank& bank, const TrackerConfig& cfg,
                             int& next_id);

MemoryBank update_bank(MemoryBank bank, const Association& assoc, const std::vector<Detection>& dets,
                       const TrackerConfig& cfg, int frame);

struct BirthRecord {
  int frame = 0;
  int detection_idx = 0;
  int track_id = 0;
};

struct TrackResult {
  std::vector<std::vector<int>> track_ids;  // [frame][detection] -> track id
  std::vector<BirthRecord> births;
};

class TrackerSession {
 public:
  explicit TrackerSession(TrackerConfig cfg);

  /// Associates one frame and updates the bank; returns the track id of each detection.
  std::vector<int> step(const std::vector<Detection>& dets);

  const MemoryBank& bank() const { return bank_; }
  const std::vector<BirthRecord>& births() const { return births_; }
  int frame() const { return frame_; }

 private:
  TrackerConfig cfg_;
  MemoryBank bank_;
  std::vector<BirthRecord> births_;
  int next_id_ = 0;
  int frame_ = 0;
};

TrackResult track_sequence(const std::vector<std::vector<Detection>>& frames, const TrackerConfig& cfg);

// Spatial-distance + category baseline with no appearance model.

struct SpatialTrackerConfig {
  double max_distance = 3.0;  // grid cells between box centers
  bool require_same_category = true;
  std::optional<int> max_age;
};

class SpatialTrackerSession {
 public:
  explicit SpatialTrackerSession(SpatialTrackerConfig cfg) : cfg_(cfg) {}
  std::vector<int> step(const std::vector<Detection>& dets);
  const std::vector<BirthRecord>& births() const { return births_; }

 private:
  struct Entry {
    int track_id;
    int category;
    Point center;
    int last_seen_frame;
  };
  SpatialTrackerConfig cfg_;
  std::vector<Entry> entries_;
  std::vector<BirthRecord> births_;
  int next_id_ = 0;
  int frame_ = 0;
};

TrackResult track_sequence_spatial(const std::vector<std::vector<Detection>>& frames,
                                   const SpatialTrackerConfig& cfg);

}  // namespace semitrack
