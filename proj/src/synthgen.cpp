#include "semitrack/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace semitrack {

void SceneSpec::validate() const {
  if (grid_size < 2) throw std::invalid_argument("scene: grid_size must be >= 2");
  if (feature_dim < 1) throw std::invalid_argument("scene: feature_dim must be >= 1");
  if (min_objects < 1 || max_objects < min_objects) throw std::invalid_argument("scene: invalid object count range");
  if (min_size < 1 || max_size < min_size) throw std::invalid_argument("scene: invalid object size range");
  if (max_size > grid_size) throw std::invalid_argument("scene: objects larger than the grid");
  if (min_speed < 0 || max_speed < min_speed) throw std::invalid_argument("scene: invalid speed range");
  if (jitter_channels < 0 || jitter_channels > feature_dim || noisy_channels < 0 || noisy_channels > feature_dim)
    throw std::invalid_argument("scene: channel counts out of range");
  if (appearance_noise < 0 || appearance_jitter < 0 || background_noise < 0 || noisy_sigma < 0)
    throw std::invalid_argument("scene: noise levels must be >= 0");
  if (entry_exit_prob < 0 || entry_exit_prob > 1) throw std::invalid_argument("scene: entry_exit_prob in [0,1]");
  if (drift < 0 || drift_shared < 0 || drift_shared > 1) throw std::invalid_argument("scene: invalid drift");
  if (!(appearance_decay > 0) || appearance_decay > 1) throw std::invalid_argument("scene: appearance_decay in (0,1]");
  if (num_categories < 1) throw std::invalid_argument("scene: num_categories must be >= 1");
  if (epsilon <= 0 || epsilon > 1) throw std::invalid_argument("scene: epsilon in (0,1]");
  // Rough packing bound: the minimum object count must fit without overlap.
  if (static_cast<long>(min_objects) * min_size * min_size > static_cast<long>(grid_size) * grid_size / 2)
    throw std::invalid_argument("scene: too many objects for the grid");
}

namespace {

struct Object {
  int id;
  int category;
  int w, h;
  double x, y, vx, vy;
  std::vector<double> appearance;
};

struct Rect {
  int x0, y0, x1, y1;  // half-open
};

Rect raster(const Object& o) {
  const int x0 = static_cast<int>(std::lround(o.x));
  const int y0 = static_cast<int>(std::lround(o.y));
  return {x0, y0, x0 + o.w, y0 + o.h};
}

bool overlaps(const Rect& a, const Rect& b) { return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1; }

bool collides(const Object& o, const std::vector<Object>& others) {
  const Rect r = raster(o);
  for (const Object& p : others)
    if (p.id != o.id && overlaps(r, raster(p))) return true;
  return false;
}

std::vector<double> unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double s = 0;
  do {
    s = 0;
    for (double& x : v) {
      x = n(rng);
      s += x * x;
    }
  } while (s == 0.0);
  for (double& x : v) x /= std::sqrt(s);
  return v;
}

class Generator {
 public:
  Generator(const SceneSpec& scene) : scene_(scene), rng_(scene.seed) {
    std::mt19937_64 domain(scene.domain_seed);
    std::normal_distribution<double> n(0.0, 1.0);
    prototypes_.resize(static_cast<std::size_t>(scene.num_categories));
    for (auto& p : prototypes_) {
      p.resize(static_cast<std::size_t>(scene.feature_dim));
      for (double& x : p) x = n(domain);
    }
    const auto shared = unit_vector(domain, scene.feature_dim);
    const auto own = unit_vector(rng_, scene.feature_dim);
    drift_dir_.resize(shared.size());
    double s = 0;
    for (std::size_t i = 0; i < shared.size(); ++i) {
      drift_dir_[i] = scene.drift_shared * shared[i] + (1.0 - scene.drift_shared) * own[i];
      s += drift_dir_[i] * drift_dir_[i];
    }
    if (s > 0)
      for (double& x : drift_dir_) x /= std::sqrt(s);
  }

  SynthSequence run(int length) {
    SynthSequence seq;
    seq.grid_size = scene_.grid_size;
    seq.feature_dim = scene_.feature_dim;
    std::uniform_int_distribution<int> count(scene_.min_objects, scene_.max_objects);
    const int initial = count(rng_);
    for (int i = 0; i < initial; ++i)
      if (!spawn()) throw std::invalid_argument("scene: infeasible initial placement");

    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < length; ++t) {
      if (t > 0) {
        move_all();
        if (scene_.entry_exit_prob > 0) {
          std::vector<Object> alive;
          for (auto& o : objects_)
            if (u(rng_) >= scene_.entry_exit_prob) alive.push_back(std::move(o));
          objects_ = std::move(alive);
          while (static_cast<int>(objects_.size()) < scene_.min_objects)
            if (!spawn()) break;
          if (static_cast<int>(objects_.size()) < scene_.max_objects && u(rng_) < scene_.entry_exit_prob) spawn();
        }
      }
      seq.frames.push_back(render(t));
    }
    return seq;
  }

 private:
  bool spawn() {
    std::uniform_int_distribution<int> size(scene_.min_size, scene_.max_size);
    std::uniform_real_distribution<double> speed(scene_.min_speed, scene_.max_speed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> n(0.0, 1.0);
    Object o;
    o.id = next_id_;
    o.category = next_id_ % scene_.num_categories;
    o.w = size(rng_);
    o.h = size(rng_);
    const double s = speed(rng_);
    const double a = angle(rng_);
    o.vx = s * std::cos(a);
    o.vy = s * std::sin(a);
    o.appearance.resize(static_cast<std::size_t>(scene_.feature_dim));
    double scale = 1.0;
    for (int c = 0; c < scene_.feature_dim; ++c) {
      o.appearance[c] = scene_.category_weight * prototypes_[o.category][c] + scale * n(rng_);
      scale *= scene_.appearance_decay;
    }
    std::uniform_real_distribution<double> px(0.0, scene_.grid_size - o.w);
    std::uniform_real_distribution<double> py(0.0, scene_.grid_size - o.h);
    for (int tries = 0; tries < 200; ++tries) {
      o.x = px(rng_);
      o.y = py(rng_);
      if (!collides(o, objects_)) {
        ++next_id_;
        objects_.push_back(std::move(o));
        return true;
      }
    }
    return false;
  }

  static void reflect(double& pos, double& vel, double limit) {
    if (pos < 0) {
      pos = -pos;
      vel = -vel;
    }
    if (pos > limit) {
      pos = 2 * limit - pos;
      vel = -vel;
    }
    pos = std::clamp(pos, 0.0, limit);
  }

  void move_all() {
    for (auto& o : objects_) {
      Object moved = o;
      moved.x += moved.vx;
      moved.y += moved.vy;
      reflect(moved.x, moved.vx, scene_.grid_size - moved.w);
      reflect(moved.y, moved.vy, scene_.grid_size - moved.h);
      if (collides(moved, objects_)) {
        o.vx = -o.vx;
        o.vy = -o.vy;
      } else {
        o = std::move(moved);
      }
    }
  }

  SynthFrame render(int t) {
    const int s = scene_.grid_size;
    const int f = scene_.feature_dim;
    SynthFrame frame;
    frame.features = Matrix(static_cast<std::size_t>(s) * s, static_cast<std::size_t>(f));
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : frame.features.data()) v = scene_.background_noise * n(rng_);

    std::vector<double> sigma(static_cast<std::size_t>(f), scene_.appearance_noise);
    for (int c = 0; c < scene_.noisy_channels; ++c) sigma[c] = scene_.noisy_sigma;
    std::vector<Mask> masks;
    for (const Object& o : objects_) {
      const Rect r = raster(o);
      Mask m(s, s);
      std::vector<double> jitter(static_cast<std::size_t>(f), 0.0);
      const int first_jittered = scene_.jitter_channels == 0 ? 0 : f - scene_.jitter_channels;
      for (int c = first_jittered; c < f; ++c) jitter[c] = scene_.appearance_jitter * n(rng_);
      for (int y = std::max(0, r.y0); y < std::min(s, r.y1); ++y)
        for (int x = std::max(0, r.x0); x < std::min(s, r.x1); ++x) {
          m.set(x, y);
          auto row = frame.features.row(static_cast<std::size_t>(y) * s + x);
          for (int c = 0; c < f; ++c)
            row[c] = o.appearance[c] + jitter[c] + sigma[c] * n(rng_) + t * scene_.drift * drift_dir_[c];
        }
      frame.objects.push_back({o.id, o.category, m, bbox_of(m)});
      masks.push_back(std::move(m));
    }
    if (!masks.empty()) {
      frame.labels = assign_instances(masks, {s, scene_.epsilon}).grid;
    } else {
      frame.labels.grid_size = s;
      frame.labels.labels.assign(static_cast<std::size_t>(s) * s, kBackground);
    }
    return frame;
  }

  const SceneSpec& scene_;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> prototypes_;
  std::vector<double> drift_dir_;
  std::vector<Object> objects_;
  int next_id_ = 0;
};

}  // namespace

SynthSequence generate_sequence(const SceneSpec& scene, int length) {
  if (length < 1) throw std::invalid_argument("generate_sequence: length must be >= 1");
  scene.validate();
  return Generator(scene).run(length);
}

std::vector<LabeledImage> to_image_dataset(const std::vector<SynthSequence>& sequences, std::uint64_t seed) {
  if (sequences.empty()) throw std::invalid_argument("to_image_dataset: no sequences");
  std::vector<LabeledImage> out;
  for (const auto& seq : sequences)
    for (const auto& fr : seq.frames) {
      if (instance_cells(fr.labels).sets.empty()) continue;
      LabeledImage im;
      im.grid_size = seq.grid_size;
      im.features = fr.features;
      im.labels = fr.labels;
      for (const auto& o : fr.objects) {
        im.masks.push_back(o.mask);
        im.categories.push_back(o.category);
        im.boxes.push_back(o.bbox);
      }
      out.push_back(std::move(im));
    }
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

OracleDetections oracle_detections(const SynthSequence& seq, const EmbeddingHead& head) {
  if (head.shape().in_dim != seq.feature_dim) throw std::invalid_argument("oracle_detections: head/scene mismatch");
  OracleDetections out;
  for (const SynthFrame& fr : seq.frames) {
    const Matrix emb = forward_cells(head, fr.features, Branch::Image);
    const auto assigned = cells_by_label(fr.labels, static_cast<int>(fr.objects.size()));
    std::vector<Detection> dets;
    std::vector<int> ids;
    for (std::size_t i = 0; i < fr.objects.size(); ++i) {
      const FrameObject& o = fr.objects[i];
      const std::vector<int> cells = assigned[i].empty() ? mask_cells(o.mask) : assigned[i];
      Detection d;
      d.category = o.category;
      d.score = 1.0;
      d.bbox = o.bbox;
      d.mask = o.mask;
      d.embedding.assign(emb.cols(), 0.0);
      for (int c : cells)
        for (std::size_t k = 0; k < emb.cols(); ++k) d.embedding[k] += emb(c, k);
      for (double& v : d.embedding) v /= static_cast<double>(cells.size());
      dets.push_back(std::move(d));
      ids.push_back(o.track_id);
    }
    out.frames.push_back(std::move(dets));
    out.gt_track_ids.push_back(std::move(ids));
  }
  return out;
}

}  // namespace semitrack
