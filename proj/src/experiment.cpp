#include "semitrack/experiment.hpp"

#include <map>
#include <stdexcept>

#include "semitrack/kernels.hpp"

namespace semitrack {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = base * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

enum Stream : std::uint64_t { kDomain = 1, kImages = 100, kUnlabeled = 200, kTest = 300, kShuffle = 400 };

std::vector<SynthSequence> make_split(const SceneSpec& base, double drift, int count, int length,
                                      std::uint64_t seed, std::uint64_t stream, const std::string& prefix) {
  return kernels::parallel_map(static_cast<std::size_t>(count), [&](std::size_t i) {
    SceneSpec s = base;
    s.drift = drift;
    s.seed = derive_seed(seed, stream + i * 1000);
    SynthSequence seq = generate_sequence(s, length);
    seq.name = prefix + std::to_string(i);
    return seq;
  });
}

}  // namespace

Benchmark make_benchmark(const BenchmarkSpec& layout, std::uint64_t seed) {
  SceneSpec scene = layout.scene;
  scene.domain_seed = derive_seed(seed, kDomain);
  Benchmark b;
  const auto image_seqs =
      make_split(scene, 0.0, layout.num_image_sequences, layout.image_length, seed, kImages, "image_");
  b.images = to_image_dataset(image_seqs, derive_seed(seed, kShuffle));
  b.unlabeled =
      make_split(scene, layout.video_drift, layout.num_unlabeled, layout.unlabeled_length, seed, kUnlabeled, "video_");
  b.test = make_split(scene, layout.video_drift, layout.num_test, layout.test_length, seed, kTest, "test_");
  return b;
}

BenchmarkSpec default_benchmark_spec() {
  BenchmarkSpec b;
  SceneSpec& s = b.scene;
  s.feature_dim = 16;
  s.noisy_channels = 8;
  s.noisy_sigma = 4.0;
  s.min_speed = 2.0;
  s.max_speed = 4.0;
  s.drift_shared = 0.8;
  b.video_drift = 0.5;
  return b;
}

LadderConfig default_ladder_config() {
  LadderConfig c;
  c.shape = {16, 0, 16, false};
  c.supervised.lambda = 10.0;
  c.supervised.mu = 0.1;
  c.correspondence.cycle_weight = 10.0;
  c.correspondence.sampling = {1, 4};
  c.correspondence.ttt_learning_rate = 2e-3;
  c.tracker.similarity_scale = 10.0;
  c.spatial.max_distance = 4.0;
  return c;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::IC: return "ic";
    case Variant::ICME: return "ic_me";
    case Variant::ICMECycle: return "ic_me_cyc";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Baseline, Variant::IC, Variant::ICME, Variant::ICMECycle})
    if (name == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant: " + name);
}

TrainedVariant train_variant(Variant v, const Benchmark& bench, const LadderConfig& cfg, std::uint64_t seed) {
  if (v == Variant::Baseline) throw std::invalid_argument("train_variant: the baseline has no embedding head");
  TrainConfig sup = cfg.supervised;
  sup.seed = derive_seed(seed, 10);
  if (v == Variant::IC) sup.mu = 0.0;
  const EmbeddingHead init = EmbeddingHead::random(cfg.shape, derive_seed(seed, 11));
  TrainResult s = train_supervised(init, bench.images, sup);
  TrainedVariant out{std::move(s.head), std::move(s.curve), {}};
  if (v == Variant::ICMECycle) {
    std::vector<VideoClip> clips;
    for (std::size_t i = 0; i < bench.unlabeled.size(); ++i)
      clips.push_back(make_video_clip(bench.unlabeled[i], cfg.label_noise, derive_seed(seed, 20 + i)));
    TrainConfig cyc = cfg.correspondence;
    cyc.seed = derive_seed(seed, 12);
    cyc.lambda = sup.lambda;
    cyc.mu = sup.mu;
    TrainResult c = cfg.joint_cycle ? train_joint(out.head, bench.images, clips, cyc)
                                    : train_correspondence(out.head, clips, cyc);
    out.head = std::move(c.head);
    out.cycle_curve = std::move(c.curve);
  }
  return out;
}

std::vector<FrameLabels> gt_frame_labels(const SynthSequence& seq) {
  std::vector<FrameLabels> out;
  for (const auto& fr : seq.frames) {
    FrameLabels fl;
    for (const auto& o : fr.objects) fl.push_back({o.track_id, o.mask});
    out.push_back(std::move(fl));
  }
  return out;
}

std::vector<FrameLabels> pred_frame_labels(const std::vector<std::vector<Detection>>& dets, const TrackResult& tracks) {
  if (dets.size() != tracks.track_ids.size()) throw std::invalid_argument("pred_frame_labels: frame count mismatch");
  std::vector<FrameLabels> out;
  for (std::size_t t = 0; t < dets.size(); ++t) {
    if (dets[t].size() != tracks.track_ids[t].size())
      throw std::invalid_argument("pred_frame_labels: detection count mismatch");
    FrameLabels fl;
    for (std::size_t n = 0; n < dets[t].size(); ++n) fl.push_back({tracks.track_ids[t][n], dets[t][n].mask});
    out.push_back(std::move(fl));
  }
  return out;
}

std::vector<GtTrack> gt_tracks(const SynthSequence& seq) {
  std::map<int, GtTrack> by_id;
  const std::size_t len = seq.frames.size();
  for (std::size_t t = 0; t < len; ++t)
    for (const auto& o : seq.frames[t].objects) {
      auto [it, fresh] = by_id.try_emplace(o.track_id);
      if (fresh) {
        it->second.track_id = o.track_id;
        it->second.category = o.category;
        it->second.frames.assign(len, std::nullopt);
      }
      it->second.frames[t] = o.mask;
    }
  std::vector<GtTrack> out;
  for (auto& [id, tr] : by_id) out.push_back(std::move(tr));
  return out;
}

std::vector<PredTrack> pred_tracks(const std::vector<std::vector<Detection>>& dets, const TrackResult& tracks) {
  if (dets.size() != tracks.track_ids.size()) throw std::invalid_argument("pred_tracks: frame count mismatch");
  std::map<int, PredTrack> by_id;
  std::map<int, int> hits;
  const std::size_t len = dets.size();
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t n = 0; n < dets[t].size(); ++n) {
      const int id = tracks.track_ids[t][n];
      auto [it, fresh] = by_id.try_emplace(id);
      if (fresh) {
        it->second.track_id = id;
        it->second.category = dets[t][n].category;
        it->second.confidence = 0.0;
        it->second.frames.assign(len, std::nullopt);
      }
      it->second.frames[t] = dets[t][n].mask;
      it->second.confidence += dets[t][n].score;
      ++hits[id];
    }
  std::vector<PredTrack> out;
  for (auto& [id, tr] : by_id) {
    tr.confidence /= hits[id];
    out.push_back(std::move(tr));
  }
  return out;
}

namespace {

TrackingEval pool(std::vector<SequenceOutcome> seqs) {
  TrackingEval out;
  std::vector<MotaResult> parts;
  for (const auto& s : seqs) parts.push_back(s.mota);
  out.pooled = pool_mota(parts);
  out.sequences = std::move(seqs);
  return out;
}

}  // namespace

TrackingEval evaluate_embedding(const EmbeddingHead& head, const std::vector<SynthSequence>& seqs,
                                const TrackerConfig& tracker, const TrainConfig* ttt) {
  if (seqs.empty()) throw std::invalid_argument("evaluate: no sequences");
  tracker.validate();
  return pool(kernels::parallel_map(seqs.size(), [&](std::size_t i) {
    SequenceOutcome o;
    const SynthSequence& seq = seqs[i];
    EmbeddingHead h = head;
    if (ttt) {
      const VideoClip clip = make_video_clip(seq);
      o.cycle_loss_before = sequence_cycle_loss(h, clip, *ttt);
      h = test_time_adapt(head, clip, *ttt);
      o.cycle_loss_after = sequence_cycle_loss(h, clip, *ttt);
    }
    const OracleDetections dets = oracle_detections(seq, h);
    o.tracks = track_sequence(dets.frames, tracker);
    o.mota = mota(pred_frame_labels(dets.frames, o.tracks), gt_frame_labels(seq));
    return o;
  }));
}

TrackingEval evaluate_spatial(const std::vector<SynthSequence>& seqs, const SpatialTrackerConfig& cfg) {
  if (seqs.empty()) throw std::invalid_argument("evaluate: no sequences");
  return pool(kernels::parallel_map(seqs.size(), [&](std::size_t i) {
    SequenceOutcome o;
    const SynthSequence& seq = seqs[i];
    // Geometry only; the embedding is never read by the spatial tracker.
    const OracleDetections dets = oracle_detections(seq, EmbeddingHead::identity(seq.feature_dim));
    o.tracks = track_sequence_spatial(dets.frames, cfg);
    o.mota = mota(pred_frame_labels(dets.frames, o.tracks), gt_frame_labels(seq));
    return o;
  }));
}

}  // namespace semitrack
