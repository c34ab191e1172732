#include "semitrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "semitrack/assignment.hpp"
#include "semitrack/kernels.hpp"

namespace semitrack {

void TrackerConfig::validate() const {
  // Fused scores exceed 1, so the upper bound only applies to raw softmax scores.
  if (!(new_object_threshold > 0.0) || (!use_postprocess && !(new_object_threshold < 1.0)))
    throw std::invalid_argument("tracker: new_object_threshold must be in (0, 1)");
  if (momentum < 0.0 || momentum > 1.0) throw std::invalid_argument("tracker: momentum must be in [0, 1]");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw std::invalid_argument("tracker: fusion weights must be >= 0");
  if (!(similarity_scale > 0.0)) throw std::invalid_argument("tracker: similarity_scale must be > 0");
  if (max_age && *max_age < 0) throw std::invalid_argument("tracker: max_age must be >= 0");
}

namespace {

std::vector<double> normalized(std::span<const double> v) {
  const double n = norm2(v);
  if (n == 0.0 || !std::isfinite(n)) throw std::invalid_argument("tracker: zero-norm or non-finite embedding");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Matrix stack(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  Matrix m(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw std::invalid_argument("tracker: embedding dimension mismatch");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

Point box_center(const BBox& b) { return {0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max)}; }

}  // namespace

Matrix similarity(const std::vector<Detection>& dets, const MemoryBank& bank) {
  if (dets.empty() || bank.entries.empty()) return Matrix(dets.size(), bank.entries.size());
  const std::size_t dim = dets.front().embedding.size();
  std::vector<std::vector<double>> d_rows, b_rows;
  for (const auto& d : dets) d_rows.push_back(d.embedding);
  for (const auto& e : bank.entries) b_rows.push_back(e.prototype);
  return kernels::cosine_similarity(stack(d_rows, dim), stack(b_rows, dim));
}

Matrix bi_softmax(const Matrix& sim) {
  if (!all_finite(sim.data())) throw std::invalid_argument("bi_softmax: non-finite input");
  Matrix out = kernels::row_softmax(sim);
  const Matrix cols = kernels::col_softmax(sim);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = 0.5 * (out.data()[i] + cols.data()[i]);
  return out;
}

Matrix fuse_scores(const Matrix& scores, const std::vector<Detection>& dets, const MemoryBank& bank,
                   const TrackerConfig& cfg) {
  if (scores.rows() != dets.size() || scores.cols() != bank.entries.size())
    throw std::invalid_argument("fuse_scores: shape mismatch");
  Matrix out = scores;
  for (std::size_t n = 0; n < dets.size(); ++n)
    for (std::size_t m = 0; m < bank.entries.size(); ++m) {
      const auto& e = bank.entries[m];
      out(n, m) += cfg.alpha * dets[n].score + cfg.beta * bbox_iou(dets[n].bbox, e.bbox) +
                   cfg.gamma * (dets[n].category == e.category ? 1.0 : 0.0);
    }
  return out;
}

Matrix association_scores(const std::vector<Detection>& dets, const MemoryBank& bank, const TrackerConfig& cfg) {
  if (dets.empty() || bank.entries.empty()) return Matrix(dets.size(), bank.entries.size());
  Matrix sim = similarity(dets, bank);
  sim *= cfg.similarity_scale;
  Matrix scores = cfg.use_bi_softmax ? bi_softmax(sim) : kernels::row_softmax(sim);
  if (cfg.use_postprocess) scores = fuse_scores(scores, dets, bank, cfg);
  return scores;
}

Association associate_scores(const Matrix& scores, const MemoryBank& bank, const TrackerConfig& cfg,
                             int& next_id) {
  const std::size_t n_det = scores.rows();
  const std::size_t n_bank = bank.entries.size();
  if (scores.cols() != n_bank) throw std::invalid_argument("associate: score matrix does not match bank");
  const double tau = cfg.new_object_threshold;

  Association out;
  out.bank_index.assign(n_det, -1);
  out.track_ids.assign(n_det, -1);
  out.scores.assign(n_det, 0.0);
  for (std::size_t n = 0; n < n_det; ++n)
    for (std::size_t m = 0; m < n_bank; ++m) out.scores[n] = std::max(out.scores[n], scores(n, m));

  if (cfg.assignment == AssignmentMode::Greedy) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t n = 0; n < n_det; ++n)
      for (std::size_t m = 0; m < n_bank; ++m)
        if (scores(n, m) >= tau) pairs.emplace_back(scores(n, m), n, m);
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
      return std::get<2>(a) < std::get<2>(b);
    });
    std::vector<char> claimed(n_bank, 0);
    for (const auto& [s, n, m] : pairs) {
      if (out.bank_index[n] >= 0 || claimed[m]) continue;
      out.bank_index[n] = static_cast<int>(m);
      claimed[m] = 1;
    }
  } else {
    Matrix cost(n_det, n_bank, std::numeric_limits<double>::infinity());
    for (std::size_t n = 0; n < n_det; ++n)
      for (std::size_t m = 0; m < n_bank; ++m)
        if (scores(n, m) >= tau) cost(n, m) = -scores(n, m);
    const auto match = min_cost_assignment(cost);
    for (std::size_t n = 0; n < n_det; ++n) out.bank_index[n] = match[n];
  }

  for (std::size_t n = 0; n < n_det; ++n) {
    if (out.bank_index[n] >= 0) {
      out.track_ids[n] = bank.entries[out.bank_index[n]].track_id;
      out.scores[n] = scores(n, out.bank_index[n]);
    } else {
      out.track_ids[n] = next_id++;
    }
  }
  return out;
}

Association associate(const std::vector<Detection>& dets, const MemoryBank& bank, const TrackerConfig& cfg,
                      int& next_id) {
  return associate_scores(association_scores(dets, bank, cfg), bank, cfg, next_id);
}

MemoryBank update_bank(MemoryBank bank, const Association& assoc, const std::vector<Detection>& dets,
                       const TrackerConfig& cfg, int frame) {
  if (assoc.track_ids.size() != dets.size()) throw std::invalid_argument("update_bank: assignment size mismatch");
  const double keep = cfg.momentum_mode == MomentumMode::KeepOld ? cfg.momentum : 1.0 - cfg.momentum;
  for (std::size_t n = 0; n < dets.size(); ++n) {
    const Detection& d = dets[n];
    const std::vector<double> e = normalized(d.embedding);
    if (assoc.bank_index[n] >= 0) {
      BankEntry& entry = bank.entries[assoc.bank_index[n]];
      std::vector<double> mixed(e.size());
      for (std::size_t c = 0; c < e.size(); ++c) mixed[c] = keep * entry.prototype[c] + (1.0 - keep) * e[c];
      // Exactly opposite vectors mixed half-and-half cancel; fall back to the new embedding.
      entry.prototype = norm2(mixed) > 0.0 ? normalized(mixed) : e;
      entry.category = d.category;
      entry.bbox = d.bbox;
      entry.mask = d.mask;
      entry.last_seen_frame = frame;
    } else {
      bank.entries.push_back({assoc.track_ids[n], e, d.category, d.bbox, d.mask, frame});
    }
  }
  if (cfg.max_age) {
    std::erase_if(bank.entries, [&](const BankEntry& e) { return frame - e.last_seen_frame > *cfg.max_age; });
  }
  return bank;
}

TrackerSession::TrackerSession(TrackerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<int> TrackerSession::step(const std::vector<Detection>& dets) {
  const Association assoc = associate(dets, bank_, cfg_, next_id_);
  for (std::size_t n = 0; n < dets.size(); ++n)
    if (assoc.bank_index[n] < 0) births_.push_back({frame_, static_cast<int>(n), assoc.track_ids[n]});
  bank_ = update_bank(std::move(bank_), assoc, dets, cfg_, frame_);
  ++frame_;
  return assoc.track_ids;
}

TrackResult track_sequence(const std::vector<std::vector<Detection>>& frames, const TrackerConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("track_sequence: no frames");
  TrackerSession session(cfg);
  TrackResult out;
  for (const auto& dets : frames) out.track_ids.push_back(session.step(dets));
  out.births = session.births();
  return out;
}

std::vector<int> SpatialTrackerSession::step(const std::vector<Detection>& dets) {
  if (cfg_.max_age) {
    std::erase_if(entries_, [&](const Entry& e) { return frame_ - e.last_seen_frame > *cfg_.max_age; });
  }
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t n = 0; n < dets.size(); ++n) {
    const Point c = box_center(dets[n].bbox);
    for (std::size_t m = 0; m < entries_.size(); ++m) {
      if (cfg_.require_same_category && entries_[m].category != dets[n].category) continue;
      const double dist = std::hypot(c.x - entries_[m].center.x, c.y - entries_[m].center.y);
      if (dist <= cfg_.max_distance) pairs.emplace_back(dist, n, m);
    }
  }
  std::stable_sort(pairs.begin(), pairs.end());
  std::vector<int> match(dets.size(), -1);
  std::vector<char> claimed(entries_.size(), 0);
  for (const auto& [d, n, m] : pairs) {
    if (match[n] >= 0 || claimed[m]) continue;
    match[n] = static_cast<int>(m);
    claimed[m] = 1;
  }
  std::vector<int> ids(dets.size());
  for (std::size_t n = 0; n < dets.size(); ++n) {
    const Point c = box_center(dets[n].bbox);
    if (match[n] >= 0) {
      Entry& e = entries_[match[n]];
      e.center = c;
      e.category = dets[n].category;
      e.last_seen_frame = frame_;
      ids[n] = e.track_id;
    } else {
      ids[n] = next_id_++;
      births_.push_back({frame_, static_cast<int>(n), ids[n]});
      entries_.push_back({ids[n], dets[n].category, c, frame_});
    }
  }
  ++frame_;
  return ids;
}

TrackResult track_sequence_spatial(const std::vector<std::vector<Detection>>& frames,
                                   const SpatialTrackerConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("track_sequence: no frames");
  SpatialTrackerSession session(cfg);
  TrackResult out;
  for (const auto& dets : frames) out.track_ids.push_back(session.step(dets));
  out.births = session.births();
  return out;
}

}  // namespace semitrack
