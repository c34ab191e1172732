#include "semitrack/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "semitrack/kernels.hpp"

namespace semitrack {

InstanceCellSets instance_cells(const InstanceLabelGrid& labels) {
  int max_label = -1;
  for (int l : labels.labels) max_label = std::max(max_label, l);
  InstanceCellSets out;
  for (auto& s : cells_by_label(labels, max_label + 1))
    if (!s.empty()) out.sets.push_back(std::move(s));
  return out;
}

// ---------------------------------------------------------------- head

EmbeddingHead::EmbeddingHead(const HeadShape& shape) : shape_(shape) {
  if (shape.in_dim < 1 || shape.out_dim < 1 || shape.hidden < 0)
    throw std::invalid_argument("EmbeddingHead: invalid shape");
  if (shape.video_head && shape.hidden == 0)
    throw std::invalid_argument("EmbeddingHead: a separate video head needs a shared hidden layer");
  std::size_t offset = 0;
  auto add = [&](int in, int out) {
    layers_.push_back({offset, in, out});
    offset = layers_.back().end();
  };
  if (shape.hidden == 0) {
    add(shape.in_dim, shape.out_dim);
  } else {
    add(shape.in_dim, shape.hidden);
    add(shape.hidden, shape.out_dim);
    if (shape.video_head) add(shape.hidden, shape.out_dim);
  }
  params_.assign(offset, 0.0);
}

EmbeddingHead EmbeddingHead::identity(int dim) {
  EmbeddingHead h({dim, 0, dim, false});
  for (int i = 0; i < dim; ++i) h.params_[static_cast<std::size_t>(i) * dim + i] = 1.0;
  return h;
}

EmbeddingHead EmbeddingHead::random(const HeadShape& shape, std::uint64_t seed) {
  EmbeddingHead h(shape);
  std::mt19937_64 rng(seed);
  for (const Layer& l : h.layers_) {
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(l.in)));
    for (std::size_t i = 0; i < l.weight_count(); ++i) h.params_[l.offset + i] = n(rng);
  }
  return h;
}

std::pair<std::size_t, std::size_t> EmbeddingHead::image_layer_range() const {
  const Layer& l = shape_.hidden == 0 ? layers_[0] : layers_[1];
  return {l.offset, l.end()};
}

std::pair<std::size_t, std::size_t> EmbeddingHead::first_layer_range() const {
  return {layers_[0].offset, layers_[0].end()};
}

std::vector<bool> EmbeddingHead::bias_mask() const {
  std::vector<bool> mask(params_.size(), false);
  for (const Layer& l : layers_)
    for (std::size_t i = l.offset + l.weight_count(); i < l.end(); ++i) mask[i] = true;
  return mask;
}

Matrix EmbeddingHead::weight(const Layer& l) const {
  Matrix w(static_cast<std::size_t>(l.out), static_cast<std::size_t>(l.in));
  std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(l.offset), l.weight_count(), w.data().begin());
  return w;
}

std::span<const double> EmbeddingHead::bias(const Layer& l) const {
  return {params_.data() + l.offset + l.weight_count(), static_cast<std::size_t>(l.out)};
}

Matrix forward_cells(const EmbeddingHead& head, const Matrix& features, Branch branch) {
  const HeadShape& s = head.shape_;
  if (static_cast<int>(features.cols()) != s.in_dim) throw std::invalid_argument("forward: feature dim mismatch");
  if (s.hidden == 0) {
    const auto& l = head.layers_[0];
    return kernels::affine_rows(features, head.weight(l), head.bias(l), false);
  }
  const auto& l0 = head.layers_[0];
  const Matrix hidden = kernels::affine_rows(features, head.weight(l0), head.bias(l0), true);
  const auto& out = (branch == Branch::Video && s.video_head) ? head.layers_[2] : head.layers_[1];
  return kernels::affine_rows(hidden, head.weight(out), head.bias(out), false);
}

EmbeddingField forward(const EmbeddingHead& head, int grid_size, const Matrix& features, Branch branch) {
  if (static_cast<int>(features.rows()) != grid_size * grid_size)
    throw std::invalid_argument("forward: feature grid mismatch");
  return {grid_size, forward_cells(head, features, branch)};
}

namespace {

// Accumulates d(out = x W^T + b) into grads for one layer.
void accumulate_affine(const Matrix& x, const Matrix& upstream, std::size_t offset, int in, int out,
                       std::vector<double>& grads) {
  double* w = grads.data() + offset;
  double* b = w + static_cast<std::size_t>(in) * out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto ur = upstream.row(r);
    for (int o = 0; o < out; ++o) {
      const double u = ur[o];
      if (u == 0.0) continue;
      double* wo = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) wo[i] += u * xr[i];
      b[o] += u;
    }
  }
}

}  // namespace

std::vector<double> backward_chain(const EmbeddingHead& head, const Matrix& features, const Matrix& upstream,
                                   Branch branch) {
  const HeadShape& s = head.shape_;
  if (upstream.rows() != features.rows() || static_cast<int>(upstream.cols()) != s.out_dim)
    throw std::invalid_argument("backward_chain: upstream shape mismatch");
  std::vector<double> grads(head.num_params(), 0.0);
  if (s.hidden == 0) {
    const auto& l = head.layers_[0];
    accumulate_affine(features, upstream, l.offset, l.in, l.out, grads);
    return grads;
  }
  const auto& l0 = head.layers_[0];
  const Matrix hidden = kernels::affine_rows(features, head.weight(l0), head.bias(l0), true);
  const auto& out = (branch == Branch::Video && s.video_head) ? head.layers_[2] : head.layers_[1];
  accumulate_affine(hidden, upstream, out.offset, out.in, out.out, grads);
  Matrix dpre = matmul(upstream, head.weight(out));
  for (std::size_t r = 0; r < dpre.rows(); ++r)
    for (std::size_t c = 0; c < dpre.cols(); ++c) dpre(r, c) *= 1.0 - hidden(r, c) * hidden(r, c);
  accumulate_affine(features, dpre, l0.offset, l0.in, l0.out, grads);
  return grads;
}

// ---------------------------------------------------------------- optimizer

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               const std::vector<bool>* trainable) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (trainable && !(*trainable)[i]) continue;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    params[i] -= cfg.learning_rate * ((state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps) +
                                      cfg.weight_decay * params[i]);
  }
}

// ---------------------------------------------------------------- objectives

namespace {

struct CompactCells {
  Matrix features;
  InstanceCellSets sets;
};

// Restricts the per-cell computation to instance cells; the head is per-cell
// so the losses and gradients are unchanged.
CompactCells compact(const Matrix& features, const InstanceCellSets& sets) {
  CompactCells out;
  std::size_t n = 0;
  for (const auto& s : sets.sets) n += s.size();
  out.features = Matrix(n, features.cols());
  std::size_t r = 0;
  for (const auto& s : sets.sets) {
    auto& dst = out.sets.sets.emplace_back();
    for (int c : s) {
      std::copy(features.row(c).begin(), features.row(c).end(), out.features.row(r).begin());
      dst.push_back(static_cast<int>(r++));
    }
  }
  return out;
}

Branch cycle_branch(const EmbeddingHead& head) { return head.shape().video_head ? Branch::Video : Branch::Image; }

void check_clip_lengths(const std::vector<VideoClip>& clips, const TrainConfig& cfg) {
  if (clips.empty()) throw std::invalid_argument("train_correspondence: no sequences");
  for (const auto& c : clips)
    if (c.length() < cfg.chain_k * cfg.sampling.max_gap + 1)
      throw std::invalid_argument("train_correspondence: sequence too short for frame-group sampling");
}

}  // namespace

ObjectiveTerms supervised_objective(const EmbeddingHead& head, const LabeledImage& image, const TrainConfig& cfg) {
  const InstanceCellSets sets = instance_cells(image.labels);
  if (sets.sets.empty()) throw std::invalid_argument("supervised_objective: image has no instances");
  const CompactCells cc = compact(image.features, sets);
  const EmbeddingField f(image.grid_size, forward_cells(head, cc.features, Branch::Image));

  ObjectiveTerms out;
  LossGrad center = center_loss(f, cc.sets);
  LossGrad contra = contra_loss(f, cc.sets);
  LossGrad ent = me_entropy(f, cc.sets);
  out.center = center.value;
  out.contra = contra.value;
  out.entropy = ent.value;
  out.total = center.value + cfg.lambda * contra.value - cfg.mu * ent.value;

  Matrix g = std::move(center.grad);
  contra.grad *= cfg.lambda;
  g += contra.grad;
  ent.grad *= -cfg.mu;
  g += ent.grad;
  out.grad = backward_chain(head, cc.features, g, Branch::Image);
  return out;
}

CycleTerms cycle_objective(const EmbeddingHead& head, const VideoClip& clip, const std::vector<int>& frame_ids,
                           const TrainConfig& cfg) {
  const Branch branch = cycle_branch(head);
  CycleBatch batch;
  std::vector<CompactCells> compacts;
  std::vector<Matrix> cell_embeddings;
  for (int t : frame_ids) {
    if (t < 0 || t >= clip.length()) throw std::out_of_range("cycle_objective: frame index");
    const auto& sets = clip.instances[t];
    if (sets.sets.empty()) throw std::invalid_argument("cycle_objective: frame without valid cells");
    compacts.push_back(compact(clip.features[t], sets));
    cell_embeddings.push_back(forward_cells(head, compacts.back().features, branch));
    const Matrix& e = cell_embeddings.back();
    FrameInstanceSet fr;
    if (cfg.per_cell_cycle) {
      fr.embeddings = e;
    } else {
      const auto& cs = compacts.back().sets.sets;
      fr.embeddings = Matrix(cs.size(), e.cols());
      for (std::size_t i = 0; i < cs.size(); ++i) {
        auto dst = fr.embeddings.row(i);
        for (int r : cs[i])
          for (std::size_t c = 0; c < e.cols(); ++c) dst[c] += e(r, c);
        for (double& v : dst) v /= static_cast<double>(cs[i].size());
      }
    }
    batch.frames.push_back(std::move(fr));
  }

  CycleLoss loss = cycle_loss(batch, cfg.temperature);
  CycleTerms out;
  out.value = loss.value;
  out.grad.assign(head.num_params(), 0.0);
  for (std::size_t f = 0; f < frame_ids.size(); ++f) {
    const Matrix& fe = compacts[f].features;
    Matrix upstream(fe.rows(), static_cast<std::size_t>(head.shape().out_dim));
    if (cfg.per_cell_cycle) {
      upstream = loss.grads[f];
    } else {
      const auto& cs = compacts[f].sets.sets;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const double inv = 1.0 / static_cast<double>(cs[i].size());
        for (int r : cs[i])
          for (std::size_t c = 0; c < upstream.cols(); ++c) upstream(r, c) = loss.grads[f](i, c) * inv;
      }
    }
    const auto g = backward_chain(head, fe, upstream, branch);
    for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += g[i];
  }
  return out;
}

// ---------------------------------------------------------------- training loops

namespace {

struct BatchItem {
  double total = 0, center = 0, contra = 0, entropy = 0, cycle = 0;
  std::vector<double> grad;
};

void check_finite_step(int step, double total, std::span<const double> grad) {
  if (!std::isfinite(total) || !all_finite(grad)) {
    std::ostringstream msg;
    msg << "training diverged at step " << step << " (loss = " << total << ")";
    throw std::runtime_error(msg.str());
  }
}

TrainResult run_training(const EmbeddingHead& init, const std::vector<LabeledImage>* images,
                         const std::vector<VideoClip>* clips, const TrainConfig& cfg,
                         const std::vector<bool>* trainable, double learning_rate, int steps) {
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  TrainResult out{init, {}};
  EmbeddingHead& head = out.head;
  std::vector<bool> mask = trainable ? *trainable : std::vector<bool>(head.num_params(), true);
  if (cfg.freeze_biases) {
    const auto bias = head.bias_mask();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && !bias[i];
  }
  AdamState adam;
  const AdamConfig adam_cfg{learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};
  std::mt19937_64 rng(cfg.seed);
  const std::size_t np = head.num_params();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int step = 0; step < steps; ++step) {
    std::vector<std::size_t> picks(bs);
    std::vector<std::uint64_t> group_seeds(bs);
    std::vector<std::size_t> clip_picks(bs);
    if (images) {
      std::uniform_int_distribution<std::size_t> d(0, images->size() - 1);
      for (auto& p : picks) p = d(rng);
    }
    if (clips) {
      std::uniform_int_distribution<std::size_t> d(0, clips->size() - 1);
      for (std::size_t b = 0; b < bs; ++b) {
        clip_picks[b] = d(rng);
        group_seeds[b] = rng();
      }
    }

    const EmbeddingHead& snapshot = head;
    auto items = kernels::parallel_map(bs, [&](std::size_t b) {
      BatchItem it;
      it.grad.assign(np, 0.0);
      if (images) {
        ObjectiveTerms t = supervised_objective(snapshot, (*images)[picks[b]], cfg);
        it.total = t.total;
        it.center = t.center;
        it.contra = t.contra;
        it.entropy = t.entropy;
        it.grad = std::move(t.grad);
      }
      if (clips) {
        const VideoClip& clip = (*clips)[clip_picks[b]];
        const auto ids = sample_frame_group(clip.length(), cfg.chain_k, group_seeds[b], cfg.sampling);
        CycleTerms t = cycle_objective(snapshot, clip, ids, cfg);
        it.cycle = t.value;
        it.total += cfg.cycle_weight * t.value;
        for (std::size_t i = 0; i < np; ++i) it.grad[i] += cfg.cycle_weight * t.grad[i];
      }
      return it;
    });

    std::vector<double> grad(np, 0.0);
    LossRecord rec;
    rec.step = step;
    double center = 0, contra = 0, entropy = 0, cycle = 0;
    for (const BatchItem& it : items) {
      rec.total += it.total;
      center += it.center;
      contra += it.contra;
      entropy += it.entropy;
      cycle += it.cycle;
      for (std::size_t i = 0; i < np; ++i) grad[i] += it.grad[i];
    }
    const double inv = 1.0 / static_cast<double>(bs);
    rec.total *= inv;
    for (double& g : grad) g *= inv;
    if (images) {
      rec.center = center * inv;
      rec.contra = contra * inv;
      rec.entropy = entropy * inv;
    }
    if (clips) rec.cycle = cycle * inv;
    check_finite_step(step, rec.total, grad);
    out.curve.push_back(rec);
    adam_step(head.params(), grad, adam, adam_cfg, &mask);
  }
  return out;
}

}  // namespace

TrainResult train_supervised(const EmbeddingHead& head, const std::vector<LabeledImage>& images,
                             const TrainConfig& cfg) {
  if (images.empty()) throw std::invalid_argument("train_supervised: no images");
  for (const auto& im : images)
    if (instance_cells(im.labels).sets.empty())
      throw std::invalid_argument("train_supervised: every image needs at least one instance");
  return run_training(head, &images, nullptr, cfg, nullptr, cfg.learning_rate, cfg.steps);
}

TrainResult train_correspondence(const EmbeddingHead& head, const std::vector<VideoClip>& clips,
                                 const TrainConfig& cfg) {
  check_clip_lengths(clips, cfg);
  return run_training(head, nullptr, &clips, cfg, nullptr, cfg.learning_rate, cfg.steps);
}

TrainResult train_joint(const EmbeddingHead& head, const std::vector<LabeledImage>& images,
                        const std::vector<VideoClip>& clips, const TrainConfig& cfg) {
  if (images.empty()) throw std::invalid_argument("train_joint: no images");
  for (const auto& im : images)
    if (instance_cells(im.labels).sets.empty())
      throw std::invalid_argument("train_joint: every image needs at least one instance");
  check_clip_lengths(clips, cfg);
  return run_training(head, &images, &clips, cfg, nullptr, cfg.learning_rate, cfg.steps);
}

EmbeddingHead test_time_adapt(const EmbeddingHead& head, const VideoClip& clip, const TrainConfig& cfg) {
  if (cfg.ttt_iters < 0) throw std::invalid_argument("test_time_adapt: ttt_iters must be >= 0");
  if (cfg.ttt_iters == 0) return head;
  const std::vector<VideoClip> clips{clip};
  check_clip_lengths(clips, cfg);
  std::vector<bool> trainable(head.num_params(), true);
  if (head.shape().video_head) {
    const auto [lo, hi] = head.image_layer_range();
    for (std::size_t i = lo; i < hi; ++i) trainable[i] = false;
  }
  return run_training(head, nullptr, &clips, cfg, &trainable, cfg.ttt_learning_rate, cfg.ttt_iters).head;
}

double sequence_cycle_loss(const EmbeddingHead& head, const VideoClip& clip, const TrainConfig& cfg) {
  const int gap = (cfg.sampling.min_gap + cfg.sampling.max_gap) / 2;
  const int span = gap * cfg.chain_k;
  if (clip.length() <= span) throw std::invalid_argument("sequence_cycle_loss: sequence too short");
  double sum = 0.0;
  int n = 0;
  for (int t = 0; t + span < clip.length(); ++t) {
    std::vector<int> ids;
    for (int i = 0; i <= cfg.chain_k; ++i) ids.push_back(t + i * gap);
    sum += cycle_objective(head, clip, ids, cfg).value;
    ++n;
  }
  return sum / n;
}

VideoClip make_video_clip(const SynthSequence& seq, double label_noise, std::uint64_t seed) {
  if (label_noise < 0.0 || label_noise > 1.0) throw std::invalid_argument("make_video_clip: label_noise in [0,1]");
  VideoClip clip;
  clip.grid_size = seq.grid_size;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n_cells = seq.grid_size * seq.grid_size;
  std::uniform_int_distribution<int> any_cell(0, n_cells - 1);
  for (const SynthFrame& fr : seq.frames) {
    clip.features.push_back(fr.features);
    InstanceCellSets sets = instance_cells(fr.labels);
    if (label_noise > 0.0) {
      std::vector<char> used(static_cast<std::size_t>(n_cells), 0);
      for (const auto& s : sets.sets)
        for (int c : s) used[c] = 1;
      for (auto& s : sets.sets)
        for (int& c : s) {
          if (u(rng) >= label_noise) continue;
          int r = any_cell(rng);
          for (int tries = 0; used[r] && tries < 4 * n_cells; ++tries) r = any_cell(rng);
          if (used[r]) continue;
          used[c] = 0;
          used[r] = 1;
          c = r;
        }
    }
    clip.instances.push_back(std::move(sets));
  }
  return clip;
}

}  // namespace semitrack
