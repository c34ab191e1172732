#pragma once

// The synthetic tracking benchmark: data splits, the training ladder
// (spatial baseline, IC, IC+ME, IC+ME+cycle), and tracking evaluation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semitrack/metrics.hpp"
#include "semitrack/model.hpp"
#include "semitrack/synthgen.hpp"
#include "semitrack/tracker.hpp"

namespace semitrack {

/// Mixes a base seed with a stream index into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct BenchmarkSpec {
  SceneSpec scene;  // seed, domain_seed and drift are set per split
  int num_image_sequences = 10;
  int image_length = 8;
  int num_unlabeled = 10;
  int unlabeled_length = 24;
  int num_test = 20;
  int test_length = 24;
  double video_drift = 0.1;  // drift of the unlabeled and test splits; images are undrifted
};

struct Benchmark {
  std::vector<LabeledImage> images;
  std::vector<SynthSequence> unlabeled;
  std::vector<SynthSequence> test;
};

Benchmark make_benchmark(const BenchmarkSpec& layout, std::uint64_t seed);

enum class Variant { Baseline, IC, ICME, ICMECycle };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct LadderConfig {
  HeadShape shape{8, 16, 8, false};
  TrainConfig supervised;
  TrainConfig correspondence;
  TrackerConfig tracker;
  SpatialTrackerConfig spatial;
  double label_noise = 0.0;  // corrupted fraction of unlabeled valid cells
  bool joint_cycle = true;   // keep the supervised terms during the cycle phase
};

struct TrainedVariant {
  EmbeddingHead head;
  std::vector<LossRecord> supervised_curve;
  std::vector<LossRecord> cycle_curve;
};

/// Settings of the reference benchmark: fast movers, half the channels
/// drowned in per-cell noise, and a shared appearance drift on the videos.
BenchmarkSpec default_benchmark_spec();

/// Ladder settings tuned for default_benchmark_spec(). The correspondence
/// config doubles as the test-time adaptation config.
LadderConfig default_ladder_config();

/// Trains the head of an embedding variant. Baseline has no head and throws.
TrainedVariant train_variant(Variant v, const Benchmark& bench, const LadderConfig& cfg, std::uint64_t seed);

std::vector<FrameLabels> gt_frame_labels(const SynthSequence& seq);
std::vector<FrameLabels> pred_frame_labels(const std::vector<std::vector<Detection>>& dets, const TrackResult& tracks);

/// Track-level views for video AP; prediction confidence is the mean detection score.
std::vector<GtTrack> gt_tracks(const SynthSequence& seq);
std::vector<PredTrack> pred_tracks(const std::vector<std::vector<Detection>>& dets, const TrackResult& tracks);

struct SequenceOutcome {
  TrackResult tracks;
  MotaResult mota;
  std::optional<double> cycle_loss_before;
  std::optional<double> cycle_loss_after;
};

struct TrackingEval {
  MotaResult pooled;
  std::vector<SequenceOutcome> sequences;
};

/// Embedding tracker on oracle detections. With `ttt` set, each sequence is
/// first adapted with test_time_adapt and its cycle loss recorded before/after.
TrackingEval evaluate_embedding(const EmbeddingHead& head, const std::vector<SynthSequence>& seqs,
                                const TrackerConfig& tracker, const TrainConfig* ttt = nullptr);

TrackingEval evaluate_spatial(const std::vector<SynthSequence>& seqs, const SpatialTrackerConfig& cfg);

}  // namespace semitrack
