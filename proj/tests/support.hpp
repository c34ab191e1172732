#pragma once

// Shared helpers for the unit tests and the acceptance runner: finite
// differences, random instance layouts, and the randomized gradient suite.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "semitrack/correspondence.hpp"
#include "semitrack/losses.hpp"
#include "semitrack/metrics.hpp"
#include "semitrack/model.hpp"
#include "semitrack/tracker.hpp"

namespace semitrack::testing {

/// Central differences of f at x, one coordinate at a time.
std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||); 0 when both norms are below 1e-8, the
/// finite-difference noise floor of a constant loss.
double rel_error(const std::vector<double>& a, const std::vector<double>& b);

std::vector<double> flat(const Matrix& m);
Matrix unflat(const std::vector<double>& v, std::size_t rows, std::size_t cols);

/// K disjoint random cell sets with sizes in [1, max_cells] on num_cells cells.
InstanceCellSets random_sets(std::mt19937_64& rng, int k, int max_cells, int num_cells);

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sd = 1.0);

/// Smallest |C_i[d] - f_q[d]| over instances with at least two cells.
double l1_kink_margin(const EmbeddingField& f, const InstanceCellSets& sets);

struct GradCheckStats {
  int configs = 0;
  int redraws = 0;  // configurations rejected near an L1 kink
  std::map<std::string, int> checks;
  std::map<std::string, double> max_error;

  double worst() const;
};

/// Checks every loss against central differences, both with respect to the
/// embeddings and end to end through a random head, on `configs` seeded
/// configurations with K <= 5, N_i <= 6, D <= 8, k <= 3.
GradCheckStats run_gradient_suite(int configs, std::uint64_t seed, double h = 1e-5);

struct InvariantStats {
  int frames = 0;
  std::map<std::string, int> checks;
  std::map<std::string, int> violations;

  bool ok() const { return violations.empty(); }
};

/// Random detection streams under random tracker configs, checking one-to-one
/// assignment, causality under truncation, bi-softmax on 1x1 inputs, fusion
/// monotonicity, unit-norm prototypes and cold-start ids on every frame.
InvariantStats run_tracker_invariants(int min_frames, std::uint64_t seed);

/// Small random video with <= 3 gt tracks, <= 3 frames and <= 3 predictions.
VideoTracks random_metric_case(std::mt19937_64& rng);

/// TP flags of the exhaustive search over all one-to-one matchings: the
/// lexicographically largest flag vector in the given prediction order.
std::vector<bool> brute_force_flags(const std::vector<const PredTrack*>& preds, const std::vector<const GtTrack*>& gts,
                                    double iou_threshold);

/// Video AP/AR from brute-force matching and a direct 101-point interpolation.
EvalReport oracle_video_ap(const VideoTracks& video);

struct MotaTrace {
  std::vector<FrameLabels> preds;
  std::vector<FrameLabels> gts;
};

/// Two objects over five frames, one missed detection, one spurious
/// hypothesis: MOTA 1 - 2/10 = 0.8.
MotaTrace mota_miss_and_false_positive();

/// Two objects over four frames whose hypothesis ids swap from frame 2 on:
/// two identity switches, MOTA 1 - 2/8 = 0.75.
MotaTrace mota_identity_swap();

/// Runs `cli` gen, train, track (with and without adaptation, baseline,
/// oracle) and eval into `root` on a small config. Returns the first failing
/// command line, or an empty string.
std::string run_cli_pipeline(const std::string& cli, const std::filesystem::path& root);

/// Relative paths of the JSON and CSV files under `a` and `b` whose bytes
/// differ or that exist on one side only.
std::vector<std::string> compare_outputs(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace semitrack::testing
