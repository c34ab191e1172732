#include "semitrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "semitrack/assignment.hpp"
#include "semitrack/matrix.hpp"

namespace semitrack {

double st_iou(const TrackMasks& a, const TrackMasks& b) {
  const std::size_t n = std::max(a.size(), b.size());
  long inter = 0, uni = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const Mask* ma = t < a.size() && a[t] ? &*a[t] : nullptr;
    const Mask* mb = t < b.size() && b[t] ? &*b[t] : nullptr;
    if (ma && mb) {
      inter += mask_intersection(*ma, *mb);
      uni += mask_union(*ma, *mb);
    } else if (ma) {
      uni += ma->count();
    } else if (mb) {
      uni += mb->count();
    }
  }
  if (uni == 0) throw std::invalid_argument("st_iou: both tracks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

bool augment(int p, const std::vector<std::vector<int>>& adj, std::vector<int>& owner, std::vector<char>& seen) {
  for (int g : adj[p]) {
    if (seen[g]) continue;
    seen[g] = 1;
    if (owner[g] < 0 || augment(owner[g], adj, owner, seen)) {
      owner[g] = p;
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<bool> match_predictions(const std::vector<const PredTrack*>& preds, const std::vector<const GtTrack*>& gts,
                                    double iou_threshold) {
  // Candidate gts per prediction, best IoU first.
  std::vector<std::vector<int>> adj(preds.size());
  for (std::size_t p = 0; p < preds.size(); ++p) {
    std::vector<std::pair<double, int>> c;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = st_iou(preds[p]->frames, gts[g]->frames);
      if (iou >= iou_threshold) c.emplace_back(-iou, static_cast<int>(g));
    }
    std::sort(c.begin(), c.end());
    for (const auto& [neg, g] : c) adj[p].push_back(g);
  }
  std::vector<bool> tp(preds.size(), false);
  std::vector<int> owner(gts.size(), -1);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    std::vector<char> seen(gts.size(), 0);
    tp[p] = augment(static_cast<int>(p), adj, owner, seen);
  }
  return tp;
}

double interpolated_ap(const std::vector<bool>& tp_sorted, int num_gt) {
  if (num_gt <= 0) throw std::invalid_argument("interpolated_ap: no ground truth");
  const std::size_t n = tp_sorted.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_sorted[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / num_gt;
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), target - 1e-12);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

namespace {

struct Scored {
  double confidence;
  std::size_t video;
  std::size_t rank;
  bool tp;
};

std::vector<const PredTrack*> sorted_preds(const std::vector<PredTrack>& preds, int category, std::size_t max_dets) {
  std::vector<const PredTrack*> out;
  for (const auto& p : preds)
    if (p.category == category) out.push_back(&p);
  std::stable_sort(out.begin(), out.end(), [](const PredTrack* a, const PredTrack* b) {
    if (a->confidence != b->confidence) return a->confidence > b->confidence;
    return a->track_id < b->track_id;
  });
  if (out.size() > max_dets) out.resize(max_dets);
  return out;
}

struct CategoryEval {
  double ap = 0.0;
  double recall = 0.0;
};

CategoryEval evaluate_category(const std::vector<VideoTracks>& videos, int category, double threshold,
                               std::size_t max_dets) {
  std::vector<Scored> all;
  int num_gt = 0;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    std::vector<const GtTrack*> gts;
    for (const auto& g : videos[v].gts)
      if (g.category == category) gts.push_back(&g);
    num_gt += static_cast<int>(gts.size());
    const auto preds = sorted_preds(videos[v].preds, category, max_dets);
    const auto tp = match_predictions(preds, gts, threshold);
    for (std::size_t i = 0; i < preds.size(); ++i) all.push_back({preds[i]->confidence, v, i, tp[i]});
  }
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.video != b.video) return a.video < b.video;
    return a.rank < b.rank;
  });
  std::vector<bool> flags;
  int tp = 0;
  for (const auto& s : all) {
    flags.push_back(s.tp);
    tp += s.tp ? 1 : 0;
  }
  return {interpolated_ap(flags, num_gt), static_cast<double>(tp) / num_gt};
}

}  // namespace

EvalReport video_ap(const std::vector<VideoTracks>& videos, const std::vector<double>& iou_thresholds) {
  std::set<int> categories;
  for (const auto& v : videos)
    for (const auto& g : v.gts) categories.insert(g.category);
  if (categories.empty()) throw std::invalid_argument("video_ap: no ground-truth tracks");
  if (iou_thresholds.empty()) throw std::invalid_argument("video_ap: no IoU thresholds");
  for (const auto& v : videos)
    for (const auto& p : v.preds)
      if (p.confidence < 0.0 || p.confidence > 1.0) throw std::invalid_argument("video_ap: confidence outside [0,1]");

  constexpr std::size_t kMaxDets = 100;
  EvalReport r;
  double ar1 = 0, ar10 = 0, ap50 = 0, ap75 = 0, ap = 0;
  for (int c : categories) {
    double class_ap = 0.0;
    for (double t : iou_thresholds) {
      class_ap += evaluate_category(videos, c, t, kMaxDets).ap;
      ar1 += evaluate_category(videos, c, t, 1).recall;
      ar10 += evaluate_category(videos, c, t, 10).recall;
    }
    class_ap /= static_cast<double>(iou_thresholds.size());
    r.per_class_ap[c] = class_ap;
    ap += class_ap;
    ap50 += evaluate_category(videos, c, 0.5, kMaxDets).ap;
    ap75 += evaluate_category(videos, c, 0.75, kMaxDets).ap;
  }
  const double nc = static_cast<double>(categories.size());
  const double nct = nc * static_cast<double>(iou_thresholds.size());
  r.ap = ap / nc;
  r.ap50 = ap50 / nc;
  r.ap75 = ap75 / nc;
  r.ar1 = ar1 / nct;
  r.ar10 = ar10 / nct;
  return r;
}

MotaResult mota(const std::vector<FrameLabels>& pred_frames, const std::vector<FrameLabels>& gt_frames,
                double iou_gate) {
  const std::size_t n_frames = std::max(pred_frames.size(), gt_frames.size());
  const FrameLabels empty;
  MotaResult r;
  std::map<int, int> prev_match;   // gt -> hyp, previous frame only
  std::map<int, int> last_match;   // gt -> hyp, most recent ever
  std::map<int, int> hyp_owner;    // hyp -> gt it was most recently matched with
  std::set<int> seen_gt;
  std::set<int> initial_gt;
  for (const auto& g : gt_frames.empty() ? empty : gt_frames.front()) initial_gt.insert(g.id);

  for (std::size_t t = 0; t < n_frames; ++t) {
    const FrameLabels& gts = t < gt_frames.size() ? gt_frames[t] : empty;
    const FrameLabels& hyps = t < pred_frames.size() ? pred_frames[t] : empty;
    r.total_gt += static_cast<int>(gts.size());

    Matrix iou(gts.size(), hyps.size());
    for (std::size_t g = 0; g < gts.size(); ++g)
      for (std::size_t h = 0; h < hyps.size(); ++h) {
        const int u = mask_union(gts[g].mask, hyps[h].mask);
        iou(g, h) = u == 0 ? 0.0 : static_cast<double>(mask_intersection(gts[g].mask, hyps[h].mask)) / u;
      }

    std::vector<int> g_match(gts.size(), -1);
    std::vector<char> h_used(hyps.size(), 0);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const auto it = prev_match.find(gts[g].id);
      if (it == prev_match.end()) continue;
      for (std::size_t h = 0; h < hyps.size(); ++h)
        if (!h_used[h] && hyps[h].id == it->second && iou(g, h) >= iou_gate) {
          g_match[g] = static_cast<int>(h);
          h_used[h] = 1;
          break;
        }
    }

    std::vector<std::size_t> free_g, free_h;
    for (std::size_t g = 0; g < gts.size(); ++g)
      if (g_match[g] < 0) free_g.push_back(g);
    for (std::size_t h = 0; h < hyps.size(); ++h)
      if (!h_used[h]) free_h.push_back(h);
    if (!free_g.empty() && !free_h.empty()) {
      Matrix cost(free_g.size(), free_h.size(), std::numeric_limits<double>::infinity());
      for (std::size_t i = 0; i < free_g.size(); ++i)
        for (std::size_t j = 0; j < free_h.size(); ++j)
          if (iou(free_g[i], free_h[j]) >= iou_gate) cost(i, j) = 1.0 - iou(free_g[i], free_h[j]);
      const auto sol = min_cost_assignment(cost);
      for (std::size_t i = 0; i < free_g.size(); ++i)
        if (sol[i] >= 0) {
          g_match[free_g[i]] = static_cast<int>(free_h[sol[i]]);
          h_used[free_h[sol[i]]] = 1;
        }
    }

    std::map<int, int> current;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const int gid = gts[g].id;
      const bool first_seen = seen_gt.insert(gid).second;
      if (first_seen && !initial_gt.count(gid)) ++r.new_objects;
      if (g_match[g] < 0) {
        ++r.false_negatives;
        continue;
      }
      const int hid = hyps[g_match[g]].id;
      ++r.matches;
      const auto last = last_match.find(gid);
      if (last != last_match.end() && last->second != hid) ++r.id_switches;
      if (last == last_match.end() && !initial_gt.count(gid)) {
        const auto owner = hyp_owner.find(hid);
        if (owner != hyp_owner.end() && owner->second != gid) ++r.id_merges;
      }
      last_match[gid] = hid;
      hyp_owner[hid] = gid;
      current[gid] = hid;
    }
    for (std::size_t h = 0; h < hyps.size(); ++h)
      if (!h_used[h]) ++r.false_positives;
    prev_match = std::move(current);
  }
  if (r.total_gt == 0) throw std::invalid_argument("mota: no ground-truth objects");
  r.mota = 1.0 - static_cast<double>(r.false_negatives + r.false_positives + r.id_switches) / r.total_gt;
  return r;
}

namespace {

template <typename Track>
std::vector<FrameLabels> to_frames(const std::vector<Track>& tracks) {
  std::size_t n = 0;
  for (const auto& t : tracks) n = std::max(n, t.frames.size());
  std::vector<FrameLabels> out(n);
  for (const auto& t : tracks)
    for (std::size_t f = 0; f < t.frames.size(); ++f)
      if (t.frames[f]) out[f].push_back({t.track_id, *t.frames[f]});
  return out;
}

}  // namespace

MotaResult mota(const std::vector<PredTrack>& preds, const std::vector<GtTrack>& gts, double iou_gate) {
  return mota(to_frames(preds), to_frames(gts), iou_gate);
}

MotaResult pool_mota(const std::vector<MotaResult>& parts) {
  MotaResult r;
  for (const auto& p : parts) {
    r.false_negatives += p.false_negatives;
    r.false_positives += p.false_positives;
    r.id_switches += p.id_switches;
    r.total_gt += p.total_gt;
    r.matches += p.matches;
    r.id_merges += p.id_merges;
    r.new_objects += p.new_objects;
  }
  if (r.total_gt == 0) throw std::invalid_argument("pool_mota: no ground-truth objects");
  r.mota = 1.0 - static_cast<double>(r.false_negatives + r.false_positives + r.id_switches) / r.total_gt;
  return r;
}

}  // namespace semitrack
