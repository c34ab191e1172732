#pragma once

// Deterministic synthetic videos: moving rectangles carrying per-object
// appearance vectors in a raw feature grid, with entries, exits and an
// optional appearance drift over time.

#include <cstdint>
#include <vector>

#include "semitrack/dataset.hpp"
#include "semitrack/model.hpp"
#include "semitrack/tracker.hpp"

namespace semitrack {

struct SceneSpec {
  int grid_size = 16;
  int feature_dim = 8;
  int min_objects = 3;
  int max_objects = 6;
  int min_size = 2;  // rectangle side, cells
  int max_size = 4;
  double min_speed = 0.5;  // cells per frame
  double max_speed = 1.5;
  double appearance_noise = 0.3;  // per-cell sigma
  double appearance_jitter = 0.0;  // per-object, per-frame sigma shared by the object's cells
  int jitter_channels = 0;         // jitter only on the last jitter_channels channels; 0 = all
  int noisy_channels = 0;          // channels [0, noisy_channels) carry noisy_sigma per-cell noise instead
  double noisy_sigma = 0.0;
  double background_noise = 0.5;
  double entry_exit_prob = 0.05;
  double drift = 0.0;         // per-frame additive appearance shift magnitude
  double drift_shared = 0.5;  // share of the domain-wide drift direction in [0, 1]
  int num_categories = 3;
  double category_weight = 0.5;  // weight of the shared category prototype in an object's appearance
  double appearance_decay = 1.0;  // ratio of successive channel stds of the per-object appearance offset
  double epsilon = 0.6;          // center-region scale used for the ground-truth label grids
  std::uint64_t domain_seed = 7;  // category prototypes and shared drift direction
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when the scene cannot be generated.
  void validate() const;
};

SynthSequence generate_sequence(const SceneSpec& scene, int length);

/// Individual labeled frames, shuffled with `seed`; no cross-frame identity.
/// Frames without any labeled instance are skipped.
std::vector<LabeledImage> to_image_dataset(const std::vector<SynthSequence>& sequences, std::uint64_t seed);

struct OracleDetections {
  std::vector<std::vector<Detection>> frames;
  std::vector<std::vector<int>> gt_track_ids;  // parallel to frames
};

/// Ground-truth geometry with confidence 1 and the mean image-branch head
/// embedding over each object's assigned cells (all mask cells when the
/// object has none).
OracleDetections oracle_detections(const SynthSequence& seq, const EmbeddingHead& head);

}  // namespace semitrack
