#pragma once

// Trainable embedding head, Adam optimizer, and the training loops:
// image-supervised (instance contrastive + maximum entropy), self-supervised
// cycle correspondence, and per-sequence test-time adaptation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semitrack/correspondence.hpp"
#include "semitrack/dataset.hpp"
#include "semitrack/losses.hpp"
#include "semitrack/matrix.hpp"

namespace semitrack {

struct HeadShape {
  int in_dim = 0;
  int hidden = 0;  // 0: single affine layer in -> out
  int out_dim = 0;
  bool video_head = false;  // separate video output layer; requires hidden > 0

  bool operator==(const HeadShape&) const = default;
};

enum class Branch { Image, Video };

/// Per-cell MLP. Layers in parameter order:
///   hidden == 0:  image  W[out x in], b[out]
///   hidden  > 0:  shared W[hidden x in], b[hidden], tanh
///                 image  W[out x hidden], b[out]
///                 video  W[out x hidden], b[out]   (video_head only)
/// Weights are stored row-major, each followed by its bias.
class EmbeddingHead {
 public:
  explicit EmbeddingHead(const HeadShape& shape);

  static EmbeddingHead identity(int dim);
  /// Gaussian weights with std 1/sqrt(fan_in), zero biases.
  static EmbeddingHead random(const HeadShape& shape, std::uint64_t seed);

  const HeadShape& shape() const { return shape_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  /// Parameter indices belonging to the image output layer.
  std::pair<std::size_t, std::size_t> image_layer_range() const;
  /// Parameter indices of the first (backbone-analog) layer.
  std::pair<std::size_t, std::size_t> first_layer_range() const;
  /// True at every bias entry.
  std::vector<bool> bias_mask() const;

  bool operator==(const EmbeddingHead&) const = default;

 private:
  friend Matrix forward_cells(const EmbeddingHead&, const Matrix&, Branch);
  friend std::vector<double> backward_chain(const EmbeddingHead&, const Matrix&, const Matrix&, Branch);

  struct Layer {
    std::size_t offset = 0;
    int in = 0;
    int out = 0;
    std::size_t weight_count() const { return static_cast<std::size_t>(in) * out; }
    std::size_t end() const { return offset + weight_count() + out; }
    bool operator==(const Layer&) const = default;
  };

  Matrix weight(const Layer& l) const;
  std::span<const double> bias(const Layer& l) const;

  HeadShape shape_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

/// Per-cell embedding of raw features (cells x in_dim) for one branch.
Matrix forward_cells(const EmbeddingHead& head, const Matrix& features, Branch branch = Branch::Image);
EmbeddingField forward(const EmbeddingHead& head, int grid_size, const Matrix& features,
                       Branch branch = Branch::Image);

/// Gradient of the loss with respect to the head parameters given the
/// upstream gradient on the head output (cells x out_dim).
std::vector<double> backward_chain(const EmbeddingHead& head, const Matrix& features, const Matrix& upstream,
                                   Branch branch = Branch::Image);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied as lr * wd * param
};

/// One Adam update. Entries where `trainable` is provided and false are left untouched.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               const std::vector<bool>* trainable = nullptr);

struct TrainConfig {
  double learning_rate = 1e-2;
  int steps = 300;
  int batch_size = 8;
  double lambda = 1.0;
  double mu = 0.1;
  double temperature = 1.0;
  double cycle_weight = 1.0;
  std::uint64_t seed = 0;
  int ttt_iters = 5;
  double ttt_learning_rate = 1e-2;
  double weight_decay = 0.0;
  bool freeze_biases = false;  // keep every bias at its initial value
  int chain_k = 1;              // frames per cycle group minus one
  bool per_cell_cycle = false;  // per-valid-cell affinities instead of instance means
  FrameGroupSampling sampling{};
};

struct LossRecord {
  int step = 0;
  double total = 0.0;
  std::optional<double> center;
  std::optional<double> contra;
  std::optional<double> entropy;
  std::optional<double> cycle;
};

struct TrainResult {
  EmbeddingHead head;
  std::vector<LossRecord> curve;
};

/// Minimizes the batch mean of  center + lambda * contra - mu * H.
TrainResult train_supervised(const EmbeddingHead& head, const std::vector<LabeledImage>& images,
                             const TrainConfig& cfg);

/// Minimizes cycle_weight * L_cyc over sampled frame groups. Uses the video
/// branch when the head has one.
TrainResult train_correspondence(const EmbeddingHead& head, const std::vector<VideoClip>& clips,
                                 const TrainConfig& cfg);

/// Minimizes the supervised objective on images plus cycle_weight * L_cyc on
/// clips, one image and one frame group per batch slot.
TrainResult train_joint(const EmbeddingHead& head, const std::vector<LabeledImage>& images,
                        const std::vector<VideoClip>& clips, const TrainConfig& cfg);

/// Runs exactly cfg.ttt_iters cycle-loss steps on one clip with a fresh
/// optimizer. With a separate video head the image output layer is frozen.
EmbeddingHead test_time_adapt(const EmbeddingHead& head, const VideoClip& clip, const TrainConfig& cfg);

/// Mean cycle loss over a fixed, deterministic set of frame groups of a clip.
double sequence_cycle_loss(const EmbeddingHead& head, const VideoClip& clip, const TrainConfig& cfg);

/// Supervised objective and parameter gradient for a single image.
struct ObjectiveTerms {
  double total = 0.0;
  double center = 0.0;
  double contra = 0.0;
  double entropy = 0.0;
  std::vector<double> grad;
};
ObjectiveTerms supervised_objective(const EmbeddingHead& head, const LabeledImage& image, const TrainConfig& cfg);

/// Cycle objective and parameter gradient for one clip and frame group.
struct CycleTerms {
  double value = 0.0;
  std::vector<double> grad;
};
CycleTerms cycle_objective(const EmbeddingHead& head, const VideoClip& clip, const std::vector<int>& frame_ids,
                           const TrainConfig& cfg);

/// Builds the cycle view of a sequence from its valid cells; a fraction
/// `label_noise` of valid cells is replaced by uniformly random cells.
VideoClip make_video_clip(const SynthSequence& seq, double label_noise = 0.0, std::uint64_t seed = 0);

}  // namespace semitrack
