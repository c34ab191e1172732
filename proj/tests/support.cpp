#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

namespace semitrack::testing {

std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom < 1e-8 ? 0.0 : std::sqrt(d) / denom;
}

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

Matrix unflat(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

InstanceCellSets random_sets(std::mt19937_64& rng, int k, int max_cells, int num_cells) {
  std::vector<int> cells(static_cast<std::size_t>(num_cells));
  std::iota(cells.begin(), cells.end(), 0);
  std::shuffle(cells.begin(), cells.end(), rng);
  std::uniform_int_distribution<int> size(1, max_cells);
  InstanceCellSets out;
  std::size_t pos = 0;
  for (int i = 0; i < k; ++i) {
    const int n = std::min<int>(size(rng), num_cells - static_cast<int>(pos) - (k - i - 1));
    out.sets.emplace_back(cells.begin() + static_cast<std::ptrdiff_t>(pos),
                          cells.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += static_cast<std::size_t>(n);
  }
  return out;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = n(rng);
  return m;
}

double l1_kink_margin(const EmbeddingField& f, const InstanceCellSets& sets) {
  const Matrix c = compute_centers(f, sets);
  double m = INFINITY;
  for (std::size_t i = 0; i < sets.sets.size(); ++i) {
    if (sets.sets[i].size() < 2) continue;
    for (int q : sets.sets[i])
      for (int d = 0; d < f.dim(); ++d) m = std::min(m, std::abs(c(i, d) - f.values(q, d)));
  }
  return m;
}

double GradCheckStats::worst() const {
  double w = 0;
  for (const auto& [k, v] : max_error) w = std::max(w, v);
  return w;
}

namespace {

constexpr double kKinkMargin = 1e-4;

using FieldLoss = std::function<LossGrad(const EmbeddingField&)>;

struct Recorder {
  GradCheckStats& s;
  void operator()(const std::string& name, double err) {
    ++s.checks[name];
    s.max_error[name] = std::max(s.max_error[name], err);
  }
};

LabeledImage image_from_sets(int grid, const Matrix& features, const InstanceCellSets& sets) {
  LabeledImage im;
  im.grid_size = grid;
  im.features = features;
  im.labels.grid_size = grid;
  im.labels.labels.assign(static_cast<std::size_t>(grid) * grid, kBackground);
  for (std::size_t i = 0; i < sets.sets.size(); ++i)
    for (int c : sets.sets[i]) im.labels.labels[c] = static_cast<int>(i);
  return im;
}

}  // namespace

GradCheckStats run_gradient_suite(int configs, std::uint64_t seed, double h) {
  GradCheckStats stats;
  Recorder rec{stats};
  constexpr int kGrid = 6;
  constexpr int kCells = kGrid * kGrid;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kdist(1, 5), ddist(2, 8), indist(2, 6), chain(1, 3), coin(0, 1);
  std::uniform_real_distribution<double> u(0.5, 2.0);

  while (stats.configs < configs) {
    const int k = kdist(rng);
    const int d = ddist(rng);
    const InstanceCellSets sets = random_sets(rng, k, 6, kCells);
    const EmbeddingField f(kGrid, random_matrix(rng, kCells, d, 0.7));

    HeadShape shape{indist(rng), coin(rng) ? 4 : 0, d, false};
    const EmbeddingHead head = EmbeddingHead::random(shape, rng());
    const Matrix feats = random_matrix(rng, kCells, shape.in_dim);
    const EmbeddingField hf(kGrid, forward_cells(head, feats));
    if (l1_kink_margin(f, sets) < kKinkMargin || l1_kink_margin(hf, sets) < kKinkMargin) {
      ++stats.redraws;
      continue;
    }
    ++stats.configs;

    const ICConfig ic{u(rng), 0.0};
    const std::uint64_t nce_seed = rng();
    bool nce_ok = k >= 2;
    if (nce_ok) {
      nce_ok = false;
      for (const auto& s : sets.sets) nce_ok |= s.size() >= 2;
    }
    std::vector<std::pair<std::string, FieldLoss>> losses = {
        {"center", [&](const EmbeddingField& e) { return center_loss(e, sets); }},
        {"contra", [&](const EmbeddingField& e) { return contra_loss(e, sets); }},
        {"ic", [&](const EmbeddingField& e) { return ic_loss(e, sets, ic); }},
        {"entropy", [&](const EmbeddingField& e) { return me_entropy(e, sets); }},
    };
    if (nce_ok) losses.emplace_back("infonce", [&](const EmbeddingField& e) { return infonce_loss(e, sets, nce_seed); });

    for (const auto& [name, loss] : losses) {
      // With respect to the embeddings.
      const auto analytic = flat(loss(f).grad);
      const auto numeric = numeric_grad(
          [&](const std::vector<double>& x) { return loss(EmbeddingField(kGrid, unflat(x, kCells, d))).value; },
          flat(f.values), h);
      rec(name + "/embedding", rel_error(analytic, numeric));

      // End to end through the head.
      const auto param_analytic = backward_chain(head, feats, loss(hf).grad);
      const auto param_numeric = numeric_grad(
          [&](const std::vector<double>& p) {
            EmbeddingHead hp = head;
            std::copy(p.begin(), p.end(), hp.params().begin());
            return loss(EmbeddingField(kGrid, forward_cells(hp, feats))).value;
          },
          {head.params().begin(), head.params().end()}, h);
      rec(name + "/params", rel_error(param_analytic, param_numeric));
    }

    {
      TrainConfig cfg;
      cfg.lambda = ic.lambda;
      cfg.mu = u(rng) - 0.5;
      const LabeledImage im = image_from_sets(kGrid, feats, sets);
      const auto analytic = supervised_objective(head, im, cfg).grad;
      const auto numeric = numeric_grad(
          [&](const std::vector<double>& p) {
            EmbeddingHead hp = head;
            std::copy(p.begin(), p.end(), hp.params().begin());
            return supervised_objective(hp, im, cfg).total;
          },
          {head.params().begin(), head.params().end()}, h);
      rec("supervised/params", rel_error(analytic, numeric));
    }

    // Cycle loss on a chain of k+1 frames.
    const int kc = chain(rng);
    const double temp = u(rng);
    CycleBatch batch;
    std::vector<std::size_t> rows;
    std::uniform_int_distribution<int> pdist(1, 5);
    for (int t = 0; t <= kc; ++t) {
      FrameInstanceSet fr;
      fr.embeddings = random_matrix(rng, static_cast<std::size_t>(pdist(rng)), d, 0.7);
      rows.push_back(fr.embeddings.rows());
      batch.frames.push_back(std::move(fr));
    }
    {
      const CycleLoss cl = cycle_loss(batch, temp);
      std::vector<double> analytic, x;
      for (int t = 0; t <= kc; ++t) {
        const auto a = flat(cl.grads[t]);
        const auto e = flat(batch.frames[t].embeddings);
        analytic.insert(analytic.end(), a.begin(), a.end());
        x.insert(x.end(), e.begin(), e.end());
      }
      const auto numeric = numeric_grad(
          [&](const std::vector<double>& v) {
            CycleBatch b = batch;
            std::size_t pos = 0;
            for (auto& fr : b.frames)
              for (double& e : fr.embeddings.data()) e = v[pos++];
            return cycle_loss(b, temp).value;
          },
          x, h);
      rec("cycle/embedding", rel_error(analytic, numeric));
    }
    {
      constexpr int kClipGrid = 4;
      VideoClip clip;
      clip.grid_size = kClipGrid;
      std::vector<int> ids;
      for (int t = 0; t <= kc; ++t) {
        clip.features.push_back(random_matrix(rng, kClipGrid * kClipGrid, shape.in_dim));
        clip.instances.push_back(random_sets(rng, pdist(rng), 3, kClipGrid * kClipGrid));
        ids.push_back(t);
      }
      TrainConfig cfg;
      cfg.temperature = temp;
      cfg.per_cell_cycle = coin(rng) == 1;
      const auto analytic = cycle_objective(head, clip, ids, cfg).grad;
      const auto numeric = numeric_grad(
          [&](const std::vector<double>& p) {
            EmbeddingHead hp = head;
            std::copy(p.begin(), p.end(), hp.params().begin());
            return cycle_objective(hp, clip, ids, cfg).value;
          },
          {head.params().begin(), head.params().end()}, h);
      rec("cycle/params", rel_error(analytic, numeric));
    }
  }
  return stats;
}

}  // namespace semitrack::testing

namespace semitrack::testing {

namespace {

Detection random_detection(std::mt19937_64& rng, int dim, int grid) {
  std::uniform_int_distribution<int> pos(0, grid - 2), cat(0, 2);
  std::uniform_real_distribution<double> score(0.05, 1.0);
  Detection d;
  d.category = cat(rng);
  d.score = score(rng);
  const int x = pos(rng), y = pos(rng);
  d.mask = Mask(grid, grid);
  d.mask.set(x, y);
  d.mask.set(x + 1, y + 1);
  d.bbox = bbox_of(d.mask);
  std::normal_distribution<double> n(0.0, 1.0);
  d.embedding.resize(static_cast<std::size_t>(dim));
  for (double& v : d.embedding) v = n(rng);
  return d;
}

TrackerConfig random_tracker_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  TrackerConfig c;
  c.use_bi_softmax = coin(rng);
  c.use_postprocess = coin(rng);
  c.assignment = coin(rng) ? AssignmentMode::Hungarian : AssignmentMode::Greedy;
  c.momentum = u(rng);
  c.momentum_mode = coin(rng) ? MomentumMode::WeightNew : MomentumMode::KeepOld;
  c.similarity_scale = 0.5 + 10 * u(rng);
  c.alpha = u(rng);
  c.beta = u(rng);
  c.gamma = u(rng);
  c.new_object_threshold = c.use_postprocess ? 0.2 + 2.5 * u(rng) : 0.05 + 0.9 * u(rng);
  if (coin(rng)) c.max_age = static_cast<int>(u(rng) * 4);
  return c;
}

}  // namespace

InvariantStats run_tracker_invariants(int min_frames, std::uint64_t seed) {
  InvariantStats st;
  auto check = [&](const std::string& name, bool ok) {
    ++st.checks[name];
    if (!ok) ++st.violations[name];
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim_d(2, 6), len_d(3, 12), count_d(0, 5);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  while (st.frames < min_frames) {
    const TrackerConfig cfg = random_tracker_config(rng);
    const int dim = dim_d(rng);
    const int len = len_d(rng);
    std::vector<std::vector<Detection>> frames(static_cast<std::size_t>(len));
    // Recurring objects make matches likely; fresh ones exercise births.
    std::vector<Detection> pool;
    for (int i = 0; i < 4; ++i) pool.push_back(random_detection(rng, dim, 8));
    for (auto& f : frames) {
      const int c = count_d(rng);
      for (int i = 0; i < c; ++i) {
        Detection d = u(rng) < 0.6 ? pool[static_cast<std::size_t>(i) % pool.size()] : random_detection(rng, dim, 8);
        for (double& v : d.embedding) v += 0.1 * n(rng);
        f.push_back(std::move(d));
      }
    }

    TrackerSession session(cfg);
    std::vector<std::vector<int>> ids;
    int max_id = -1;
    for (int t = 0; t < len; ++t) {
      const auto& dets = frames[static_cast<std::size_t>(t)];
      const MemoryBank before = session.bank();
      const auto out = session.step(dets);
      ids.push_back(out);
      ++st.frames;

      std::vector<int> sorted = out;
      std::sort(sorted.begin(), sorted.end());
      check("one_to_one", std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

      bool minted_in_order = true;
      for (int id : out) {
        bool known = false;
        for (const auto& e : before.entries) known |= e.track_id == id;
        if (!known) {
          minted_in_order &= id == max_id + 1;
          max_id = id;
        }
      }
      check("id_minting", minted_in_order);
      if (before.entries.empty()) {
        bool cold = true;
        for (std::size_t i = 0; i < out.size(); ++i) cold &= out[i] == static_cast<int>(i) + (max_id + 1 - static_cast<int>(out.size()));
        check("cold_start", cold);
      }
      if (t == 0) {
        bool first = true;
        for (std::size_t i = 0; i < out.size(); ++i) first &= out[i] == static_cast<int>(i);
        check("cold_start", first);
      }

      for (const auto& e : session.bank().entries) check("unit_norm", std::abs(norm2(e.prototype) - 1.0) < 1e-12);

      const double s = n(rng) * 10;
      check("bi_softmax_1x1", bi_softmax(Matrix::from_rows({{s}}))(0, 0) == 1.0);

      if (!dets.empty() && !before.entries.empty()) {
        const Matrix base = association_scores(dets, before, cfg);
        const Matrix fused = fuse_scores(base, dets, before, cfg);
        Matrix bumped = base;
        for (double& v : bumped.data()) v += u(rng);
        const Matrix fused_bumped = fuse_scores(bumped, dets, before, cfg);
        std::vector<Detection> better = dets;
        for (auto& d : better) d.score = std::min(1.0, d.score + u(rng));
        const Matrix fused_better = fuse_scores(base, better, before, cfg);
        TrackerConfig heavier = cfg;
        heavier.alpha += u(rng);
        heavier.beta += u(rng);
        heavier.gamma += u(rng);
        const Matrix fused_heavier = fuse_scores(base, dets, before, heavier);
        bool mono = true;
        for (std::size_t i = 0; i < fused.size(); ++i) {
          mono &= fused_bumped.data()[i] >= fused.data()[i];
          mono &= fused_better.data()[i] >= fused.data()[i];
          mono &= fused_heavier.data()[i] >= fused.data()[i];
        }
        check("fusion_monotone", mono);
      }
    }

    const int cut = std::uniform_int_distribution<int>(1, len)(rng);
    const std::vector<std::vector<Detection>> prefix(frames.begin(), frames.begin() + cut);
    const TrackResult truncated = track_sequence(prefix, cfg);
    bool causal = true;
    for (int t = 0; t < cut; ++t) causal &= truncated.track_ids[static_cast<std::size_t>(t)] == ids[static_cast<std::size_t>(t)];
    check("causality", causal);
  }
  return st;
}

}  // namespace semitrack::testing

namespace semitrack::testing {

namespace {

double naive_st_iou(const TrackMasks& a, const TrackMasks& b) {
  long inter = 0, uni = 0;
  for (std::size_t t = 0; t < std::max(a.size(), b.size()); ++t) {
    const Mask* ma = t < a.size() && a[t] ? &*a[t] : nullptr;
    const Mask* mb = t < b.size() && b[t] ? &*b[t] : nullptr;
    const std::size_t n = ma ? ma->bits.size() : mb ? mb->bits.size() : 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool x = ma && ma->bits[i], y = mb && mb->bits[i];
      inter += x && y;
      uni += x || y;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

void search(std::size_t p, const std::vector<const PredTrack*>& preds, const std::vector<const GtTrack*>& gts,
            double thr, std::vector<char>& used, std::vector<bool>& cur, std::vector<bool>& best) {
  if (p == preds.size()) {
    if (std::lexicographical_compare(best.begin(), best.end(), cur.begin(), cur.end())) best = cur;
    return;
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (used[g] || naive_st_iou(preds[p]->frames, gts[g]->frames) < thr) continue;
    used[g] = 1;
    cur[p] = true;
    search(p + 1, preds, gts, thr, used, cur, best);
    used[g] = 0;
  }
  cur[p] = false;
  search(p + 1, preds, gts, thr, used, cur, best);
}

double oracle_ap(const std::vector<bool>& flags, int num_gt) {
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    double best = 0;
    int tp = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
      tp += flags[i];
      if (static_cast<double>(tp) / num_gt >= r / 100.0 - 1e-12)
        best = std::max(best, static_cast<double>(tp) / static_cast<double>(i + 1));
    }
    sum += best;
  }
  return sum / 101;
}

}  // namespace

VideoTracks random_metric_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> frames_d(1, 3), gts_d(1, 3), preds_d(0, 3), cat_d(0, 1), cell_d(0, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int frames = frames_d(rng);
  auto random_track = [&](bool may_copy, const std::vector<GtTrack>& gts) {
    TrackMasks t(static_cast<std::size_t>(frames));
    if (may_copy && !gts.empty() && u(rng) < 0.5) {
      t = gts[std::uniform_int_distribution<std::size_t>(0, gts.size() - 1)(rng)].frames;
      // Perturb one cell so IoUs spread over the thresholds.
      for (auto& m : t)
        if (m && u(rng) < 0.5) {
          const int c = cell_d(rng);
          m->set(c % 3, c / 3, !m->at(c % 3, c / 3));
          if (m->empty()) m.reset();
        }
    }
    bool any = false;
    for (auto& m : t) any |= m.has_value();
    while (!any) {
      for (auto& m : t) {
        if (u(rng) < 0.3) continue;
        Mask mk(3, 3);
        for (int c = 0; c < 9; ++c)
          if (u(rng) < 0.4) mk.set(c % 3, c / 3);
        if (!mk.empty()) {
          m = mk;
          any = true;
        }
      }
    }
    return t;
  };
  VideoTracks v;
  const int ng = gts_d(rng), np = preds_d(rng);
  for (int g = 0; g < ng; ++g) v.gts.push_back({g, cat_d(rng), random_track(false, v.gts)});
  for (int p = 0; p < np; ++p) {
    // Coarse confidences produce ties broken by track id.
    v.preds.push_back({p, cat_d(rng), std::round(u(rng) * 4) / 4, random_track(true, v.gts)});
  }
  return v;
}

std::vector<bool> brute_force_flags(const std::vector<const PredTrack*>& preds, const std::vector<const GtTrack*>& gts,
                                    double iou_threshold) {
  std::vector<char> used(gts.size(), 0);
  std::vector<bool> cur(preds.size(), false), best(preds.size(), false);
  search(0, preds, gts, iou_threshold, used, cur, best);
  return best;
}

EvalReport oracle_video_ap(const VideoTracks& video) {
  std::set<int> cats;
  for (const auto& g : video.gts) cats.insert(g.category);
  const auto thresholds = default_iou_thresholds();
  EvalReport r;
  for (int c : cats) {
    std::vector<const GtTrack*> gts;
    for (const auto& g : video.gts)
      if (g.category == c) gts.push_back(&g);
    std::vector<const PredTrack*> preds;
    for (const auto& p : video.preds)
      if (p.category == c) preds.push_back(&p);
    std::stable_sort(preds.begin(), preds.end(), [](const PredTrack* a, const PredTrack* b) {
      return a->confidence != b->confidence ? a->confidence > b->confidence : a->track_id < b->track_id;
    });
    const int ng = static_cast<int>(gts.size());
    double class_ap = 0;
    for (double t : thresholds) {
      const auto flags = brute_force_flags(preds, gts, t);
      const double ap = oracle_ap(flags, ng);
      class_ap += ap;
      if (std::abs(t - 0.5) < 1e-9) r.ap50 += ap;
      if (std::abs(t - 0.75) < 1e-9) r.ap75 += ap;
      const std::vector<const PredTrack*> top1(preds.begin(), preds.begin() + std::min<std::size_t>(1, preds.size()));
      int tp1 = 0, tp10 = 0;
      for (bool f : brute_force_flags(top1, gts, t)) tp1 += f;
      for (bool f : flags) tp10 += f;
      r.ar1 += static_cast<double>(tp1) / ng;
      r.ar10 += static_cast<double>(tp10) / ng;
    }
    r.per_class_ap[c] = class_ap / static_cast<double>(thresholds.size());
    r.ap += r.per_class_ap[c];
  }
  const double nc = static_cast<double>(cats.size());
  r.ap /= nc;
  r.ap50 /= nc;
  r.ap75 /= nc;
  r.ar1 /= nc * static_cast<double>(thresholds.size());
  r.ar10 /= nc * static_cast<double>(thresholds.size());
  return r;
}

}  // namespace semitrack::testing

namespace semitrack::testing {

namespace {

Mask column(int x) {
  Mask m(4, 4);
  for (int y = 0; y < 4; ++y) m.set(x, y);
  return m;
}

}  // namespace

MotaTrace mota_miss_and_false_positive() {
  MotaTrace tr;
  for (int t = 0; t < 5; ++t) {
    tr.gts.push_back({{0, column(0)}, {1, column(2)}});
    FrameLabels p{{10, column(0)}, {11, column(2)}};
    if (t == 2) p.erase(p.begin());
    if (t == 3) p.push_back({12, column(3)});
    tr.preds.push_back(p);
  }
  return tr;
}

MotaTrace mota_identity_swap() {
  MotaTrace tr;
  for (int t = 0; t < 4; ++t) {
    tr.gts.push_back({{0, column(0)}, {1, column(2)}});
    tr.preds.push_back(t < 2 ? FrameLabels{{10, column(0)}, {11, column(2)}} : FrameLabels{{11, column(0)}, {10, column(2)}});
  }
  return tr;
}

}  // namespace semitrack::testing

namespace semitrack::testing {

namespace {

constexpr const char* kSmallConfig = R"({"benchmark":{"num_image_sequences":2,"image_length":4,"num_unlabeled":2,
"unlabeled_length":12,"num_test":2,"test_length":8,"scene":{"grid_size":10}},
"supervised":{"steps":15},"correspondence":{"steps":10}})";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> collect(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".json" || ext == ".csv"))
      out[std::filesystem::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

std::string run_cli_pipeline(const std::string& cli, const std::filesystem::path& root) {
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  {
    std::ofstream(root / "config.json") << kSmallConfig;
  }
  const std::string r = root.string();
  const std::string common = " --config " + r + "/config.json --seed 3";
  const std::vector<std::string> cmds = {
      "gen" + common + " --out " + r + "/data",
      "train" + common + " --data " + r + "/data --out " + r + "/model --variant ic_me_cyc",
      "track" + common + " --data " + r + "/data --checkpoint " + r + "/model/checkpoint.json --ttt-iters 0 --out " + r + "/runs",
      "track" + common + " --data " + r + "/data --checkpoint " + r + "/model/checkpoint.json --ttt-iters 2 --out " + r + "/runs",
      "track" + common + " --data " + r + "/data --baseline --label baseline --out " + r + "/runs",
      "track" + common + " --data " + r + "/data --oracle --label oracle --out " + r + "/runs",
      "eval" + common + " --data " + r + "/data --tracks " + r + "/runs/ic_me_cyc_ttt0 --tracks " + r +
          "/runs/ic_me_cyc_ttt2 --tracks " + r + "/runs/baseline --tracks " + r + "/runs/oracle --out " + r + "/eval",
  };
  for (const auto& c : cmds) {
    const std::string line = cli + " " + c + " > " + r + "/log.txt 2>&1";
    if (std::system(line.c_str()) != 0) return line;
  }
  std::filesystem::remove(root / "log.txt");
  return {};
}

std::vector<std::string> compare_outputs(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto fa = collect(a), fb = collect(b);
  std::vector<std::string> diff;
  for (const auto& [k, v] : fa) {
    const auto it = fb.find(k);
    if (it == fb.end() || it->second != v) diff.push_back(k);
  }
  for (const auto& [k, v] : fb)
    if (!fa.count(k)) diff.push_back(k);
  return diff;
}

}  // namespace semitrack::testing
