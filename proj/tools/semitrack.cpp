// semitrack: gen | train | track | eval

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semitrack/config.hpp"
#include "semitrack/experiment.hpp"
#include "semitrack/io.hpp"
#include "semitrack/kernels.hpp"

using namespace semitrack;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run config; missing keys keep defaults");
  app->add_option("--seed", c.seed, "overrides the config seed");
  app->add_option("--out", c.out, "output directory")->required();
}

RunConfig load_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg = run_config_from_json(io::read_json(c.config_path));
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

json file_entry(const fs::path& root, const fs::path& p) {
  return {{"path", fs::relative(p, root).generic_string()}, {"sha256", io::sha256_file(p)}};
}

json provenance(const RunConfig& cfg, json inputs) {
  return {{"config", to_json(cfg)}, {"seed", cfg.seed}, {"inputs", std::move(inputs)}};
}

/// Leading '#' lines carrying the provenance of a CSV file.
std::string csv_preamble(const json& prov) {
  return "# seed: " + prov["seed"].dump() + "\n# config: " + prov["config"].dump() +
         "\n# inputs: " + prov["inputs"].dump() + "\n";
}

// ---- dataset ----

struct Dataset {
  fs::path root;
  json manifest;
  std::string manifest_sha;
};

Dataset open_dataset(const std::string& dir) {
  Dataset d;
  d.root = dir;
  const fs::path mp = d.root / "manifest.json";
  if (!fs::exists(mp)) throw std::runtime_error("dataset not found: " + mp.string());
  d.manifest = io::read_json(mp);
  io::check_schema(d.manifest, "dataset", mp);
  d.manifest_sha = io::sha256_file(mp);
  return d;
}

fs::path checked(const Dataset& d, const json& entry) {
  const fs::path p = d.root / entry.at("path").get<std::string>();
  if (io::sha256_file(p) != entry.at("sha256").get<std::string>())
    throw std::runtime_error(p.string() + ": checksum does not match the dataset manifest");
  return p;
}

std::vector<SynthSequence> load_split(const Dataset& d, const char* split) {
  const json& entries = d.manifest.at("files").at(split);
  return kernels::parallel_map(entries.size(), [&](std::size_t i) { return io::read_sequence(checked(d, entries[i])); });
}

int cmd_gen(const Common& c, std::optional<int> num_test, std::optional<int> num_unlabeled,
            std::optional<int> num_images, std::optional<double> drift) {
  RunConfig cfg = load_config(c);
  BenchmarkSpec& b = cfg.benchmark;
  if (num_test) b.num_test = *num_test;
  if (num_unlabeled) b.num_unlabeled = *num_unlabeled;
  if (num_images) b.num_image_sequences = *num_images;
  if (drift) b.video_drift = *drift;
  if (b.num_test < 1 || b.num_unlabeled < 0 || b.num_image_sequences < 1)
    throw std::invalid_argument("gen: need at least one test and one image sequence");

  const fs::path root = c.out;
  fs::create_directories(root);
  fs::remove(root / "manifest.json");
  const Benchmark bench = make_benchmark(b, cfg.seed);

  json files = {{"images", json::array()}, {"unlabeled", json::array()}, {"test", json::array()}};
  const fs::path ip = io::write_images(root, "images", bench.images);
  files["images"].push_back(file_entry(root, ip));
  files["images"].push_back(file_entry(root, root / "images.feat"));
  for (const auto& s : bench.unlabeled) files["unlabeled"].push_back(file_entry(root, io::write_sequence(root / "unlabeled", s.name, s)));
  for (const auto& s : bench.test) files["test"].push_back(file_entry(root, io::write_sequence(root / "test", s.name, s)));
  json m = provenance(cfg, json::object());
  m["schema_version"] = io::kSchemaVersion;
  m["kind"] = "dataset";
  m["files"] = std::move(files);
  io::write_json(root / "manifest.json", m);
  std::printf("wrote %zu images, %zu unlabeled, %zu test sequences to %s\n", bench.images.size(),
              bench.unlabeled.size(), bench.test.size(), c.out.c_str());
  return 0;
}

// ---- train ----

int cmd_train(const Common& c, const std::string& data, const std::string& variant_name_in,
              std::optional<int> sup_steps, std::optional<int> cyc_steps, std::optional<int> chain_k,
              std::optional<double> label_noise) {
  RunConfig cfg = load_config(c);
  LadderConfig& lc = cfg.ladder;
  if (sup_steps) lc.supervised.steps = *sup_steps;
  if (cyc_steps) lc.correspondence.steps = *cyc_steps;
  if (chain_k) lc.correspondence.chain_k = *chain_k;
  if (label_noise) lc.label_noise = *label_noise;
  const Variant v = parse_variant(variant_name_in);
  if (v == Variant::Baseline) throw std::invalid_argument("train: the baseline has nothing to train");

  const Dataset d = open_dataset(data);
  Benchmark bench;
  bench.images = io::read_images(checked(d, d.manifest.at("files").at("images").at(0)));
  if (v == Variant::ICMECycle) bench.unlabeled = load_split(d, "unlabeled");
  if (bench.images.empty()) throw std::runtime_error("train: dataset has no labeled images");
  const int dim = static_cast<int>(bench.images[0].features.cols());
  if (lc.shape.in_dim != dim)
    throw std::invalid_argument("train: head in_dim " + std::to_string(lc.shape.in_dim) +
                                " does not match dataset feature_dim " + std::to_string(dim));

  const TrainedVariant t = train_variant(v, bench, lc, cfg.seed);
  const fs::path root = c.out;
  const json prov = provenance(cfg, {{"dataset_manifest", d.manifest_sha}});

  std::vector<std::pair<std::string, std::vector<LossRecord>>> phases{{"supervised", t.supervised_curve}};
  if (!t.cycle_curve.empty()) phases.emplace_back("correspondence", t.cycle_curve);
  const std::string csv = csv_preamble(prov) + io::loss_csv(phases);
  io::atomic_write(root / "loss.csv", csv);

  json ck = prov;
  ck["schema_version"] = io::kSchemaVersion;
  ck["kind"] = "checkpoint";
  ck["variant"] = variant_name(v);
  ck["head"] = io::head_to_json(t.head);
  ck["loss_csv_sha256"] = io::sha256_hex(csv);
  io::write_json(root / "checkpoint.json", ck);
  const auto& last = t.cycle_curve.empty() ? t.supervised_curve.back() : t.cycle_curve.back();
  std::printf("trained %s: final loss %.6f -> %s\n", variant_name(v), last.total, (root / "checkpoint.json").c_str());
  return 0;
}

// ---- track ----

struct TrackFlags {
  std::string data;
  std::string checkpoint;
  bool baseline = false;
  bool oracle = false;
  std::optional<int> ttt_iters;
  std::optional<std::string> bi_softmax;
  std::optional<std::string> postprocess;
  std::optional<std::string> assignment;
  std::optional<double> tau;
  bool render = false;
  std::string label;
};

bool on_off(const std::string& s, const char* flag) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw std::invalid_argument(std::string(flag) + " expects on or off");
}

struct SequenceRun {
  std::vector<std::vector<Detection>> dets;
  TrackResult tracks;
  std::optional<double> cyc_before, cyc_after;
};

TrackResult oracle_tracks(const OracleDetections& od) {
  TrackResult r;
  std::set<int> seen;
  for (std::size_t t = 0; t < od.gt_track_ids.size(); ++t) {
    r.track_ids.push_back(od.gt_track_ids[t]);
    for (std::size_t n = 0; n < od.gt_track_ids[t].size(); ++n)
      if (seen.insert(od.gt_track_ids[t][n]).second)
        r.births.push_back({static_cast<int>(t), static_cast<int>(n), od.gt_track_ids[t][n]});
  }
  return r;
}

int cmd_track(const Common& c, const TrackFlags& f) {
  RunConfig cfg = load_config(c);
  TrackerConfig& tc = cfg.ladder.tracker;
  TrainConfig& ttt = cfg.ladder.correspondence;
  if (f.bi_softmax) tc.use_bi_softmax = on_off(*f.bi_softmax, "--bi-softmax");
  if (f.postprocess) tc.use_postprocess = on_off(*f.postprocess, "--postprocess");
  if (f.assignment) {
    if (*f.assignment == "greedy") tc.assignment = AssignmentMode::Greedy;
    else if (*f.assignment == "hungarian") tc.assignment = AssignmentMode::Hungarian;
    else throw std::invalid_argument("--assignment expects greedy or hungarian");
  }
  if (f.tau) tc.new_object_threshold = *f.tau;
  if (f.ttt_iters) ttt.ttt_iters = *f.ttt_iters;
  tc.validate();
  const int modes = int(f.baseline) + int(f.oracle) + int(!f.checkpoint.empty());
  if (modes != 1) throw std::invalid_argument("track: give exactly one of --checkpoint, --baseline, --oracle");

  const Dataset d = open_dataset(f.data);
  const auto seqs = load_split(d, "test");
  json inputs = {{"dataset_manifest", d.manifest_sha}};

  std::string variant = f.baseline ? "baseline" : "oracle";
  std::optional<EmbeddingHead> head;
  if (!f.checkpoint.empty()) {
    if (!fs::exists(f.checkpoint)) throw std::runtime_error("checkpoint not found: " + f.checkpoint);
    const json ck = io::read_json(f.checkpoint);
    io::check_schema(ck, "checkpoint", f.checkpoint);
    head = io::head_from_json(ck.at("head"));
    variant = ck.at("variant").get<std::string>();
    inputs["checkpoint"] = io::sha256_file(f.checkpoint);
    if (head->shape().in_dim != seqs.at(0).feature_dim)
      throw std::invalid_argument("track: checkpoint does not match the dataset feature_dim");
  }
  const int ttt_iters = head ? ttt.ttt_iters : 0;
  if (ttt_iters < 0) throw std::invalid_argument("--ttt-iters must be >= 0");
  ttt.ttt_iters = ttt_iters;

  std::string label = f.label;
  if (label.empty()) {
    label = variant + "_ttt" + std::to_string(ttt_iters) + (tc.use_bi_softmax ? "" : "_nobs") +
            (tc.use_postprocess ? "_pp" : "") + (tc.assignment == AssignmentMode::Hungarian ? "_hung" : "");
  }
  if (label.find_first_of("/\\") != std::string::npos || label == "." || label == "..")
    throw std::invalid_argument("track: label must be a plain name");

  const auto runs = kernels::parallel_map(seqs.size(), [&](std::size_t i) {
    const SynthSequence& seq = seqs[i];
    SequenceRun r;
    if (!head) {
      const OracleDetections od = oracle_detections(seq, EmbeddingHead::identity(seq.feature_dim));
      r.dets = od.frames;
      r.tracks = f.oracle ? oracle_tracks(od) : track_sequence_spatial(od.frames, cfg.ladder.spatial);
      return r;
    }
    EmbeddingHead h = *head;
    if (ttt_iters > 0) {
      const VideoClip clip = make_video_clip(seq);
      r.cyc_before = sequence_cycle_loss(h, clip, ttt);
      h = test_time_adapt(h, clip, ttt);
      r.cyc_after = sequence_cycle_loss(h, clip, ttt);
    }
    r.dets = oracle_detections(seq, h).frames;
    r.tracks = track_sequence(r.dets, tc);
    return r;
  });

  const fs::path root = c.out;
  const fs::path dir = root / label;
  json prov = provenance(cfg, inputs);
  json det_doc = prov, trk_doc = prov;
  det_doc["schema_version"] = trk_doc["schema_version"] = io::kSchemaVersion;
  det_doc["kind"] = "detections";
  trk_doc["kind"] = "tracks";
  trk_doc["label"] = label;
  trk_doc["variant"] = variant;
  trk_doc["ttt_iters"] = ttt_iters;
  det_doc["sequences"] = json::array();
  trk_doc["sequences"] = json::array();
  std::vector<std::string> names;
  std::vector<TrackResult> results;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    det_doc["sequences"].push_back({{"name", seqs[i].name}, {"frames", io::detections_to_json(runs[i].dets)}});
    json s = io::tracks_to_json(runs[i].tracks);
    s["name"] = seqs[i].name;
    if (runs[i].cyc_before) {
      s["cycle_loss_before"] = *runs[i].cyc_before;
      s["cycle_loss_after"] = *runs[i].cyc_after;
    }
    trk_doc["sequences"].push_back(std::move(s));
    names.push_back(seqs[i].name);
    results.push_back(runs[i].tracks);
  }
  io::write_json(dir / "detections.json", det_doc);
  trk_doc["detections_sha256"] = io::sha256_file(dir / "detections.json");
  io::write_json(dir / "tracks.json", trk_doc);
  io::atomic_write(dir / "summary.csv", csv_preamble(prov) + io::track_summary_csv(names, results, true));

  if (f.render) {
    for (std::size_t i = 0; i < seqs.size(); ++i)
      for (std::size_t t = 0; t < runs[i].dets.size(); ++t) {
        std::vector<std::pair<int, Mask>> labeled;
        for (std::size_t n = 0; n < runs[i].dets[t].size(); ++n)
          labeled.emplace_back(runs[i].tracks.track_ids[t][n], runs[i].dets[t][n].mask);
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.ppm", t);
        io::atomic_write(dir / "render" / seqs[i].name / name, io::render_ppm(seqs[i].grid_size, labeled, 8));
      }
  }

  const fs::path mp = root / "manifest.json";
  json manifest = {{"schema_version", io::kSchemaVersion}, {"kind", "track_manifest"}, {"runs", json::object()}};
  if (fs::exists(mp)) {
    manifest = io::read_json(mp);
    io::check_schema(manifest, "track_manifest", mp);
  }
  manifest["runs"][label] = {{"variant", variant},
                             {"ttt_iters", ttt_iters},
                             {"bi_softmax", tc.use_bi_softmax},
                             {"postprocess", tc.use_postprocess},
                             {"seed", cfg.seed},
                             {"tracks", file_entry(root, dir / "tracks.json")},
                             {"detections", file_entry(root, dir / "detections.json")},
                             {"summary", file_entry(root, dir / "summary.csv")}};
  io::write_json(mp, manifest);
  std::printf("tracked %zu sequences as run '%s'\n", seqs.size(), label.c_str());
  return 0;
}

// ---- eval ----

int cmd_eval(const Common& c, const std::string& data, const std::vector<std::string>& track_dirs, double iou_gate) {
  if (track_dirs.empty()) throw std::invalid_argument("eval: give at least one --tracks directory");
  if (!(iou_gate > 0.0 && iou_gate <= 1.0)) throw std::invalid_argument("eval: --iou-gate in (0, 1]");
  const Dataset d = open_dataset(data);
  const auto seqs = load_split(d, "test");
  std::map<std::string, const SynthSequence*> by_name;
  for (const auto& s : seqs) by_name[s.name] = &s;

  json runs = json::array();
  json inputs = {{"dataset_manifest", d.manifest_sha}};
  std::string csv =
      "label,variant,ttt_iters,ap,ap50,ap75,ar1,ar10,mota,false_negatives,false_positives,id_switches,id_merges,"
      "new_objects,total_gt\n";
  for (const auto& dir_s : track_dirs) {
    const fs::path dir = dir_s;
    const fs::path tp = dir / "tracks.json", dp = dir / "detections.json";
    if (!fs::exists(tp) || !fs::exists(dp)) throw std::runtime_error("eval: missing tracks/detections in " + dir_s);
    const json tj = io::read_json(tp);
    io::check_schema(tj, "tracks", tp);
    const json dj = io::read_json(dp);
    io::check_schema(dj, "detections", dp);
    const std::string dsha = io::sha256_file(dp);
    if (tj.at("detections_sha256") != dsha) throw std::runtime_error("eval: " + dp.string() + " does not match tracks");
    if (tj.at("inputs").at("dataset_manifest") != d.manifest_sha)
      throw std::runtime_error("eval: " + tp.string() + " was produced from a different dataset");

    const json& ts = tj.at("sequences");
    const json& ds = dj.at("sequences");
    if (ts.size() != ds.size() || ts.size() != seqs.size())
      throw std::runtime_error("eval: sequence count mismatch in " + dir_s);
    std::vector<VideoTracks> videos;
    std::vector<MotaResult> parts;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::string name = ts[i].at("name").get<std::string>();
      if (ds[i].at("name") != name || !by_name.count(name))
        throw std::runtime_error("eval: unknown or misaligned sequence " + name);
      const SynthSequence& seq = *by_name[name];
      const auto dets = io::detections_from_json(ds[i].at("frames"));
      const TrackResult tr = io::tracks_from_json(ts[i]);
      if (dets.size() != seq.frames.size()) throw std::runtime_error("eval: frame count mismatch in " + name);
      videos.push_back({pred_tracks(dets, tr), gt_tracks(seq)});
      parts.push_back(mota(pred_frame_labels(dets, tr), gt_frame_labels(seq), iou_gate));
    }
    EvalReport rep = video_ap(videos);
    const MotaResult m = pool_mota(parts);
    rep.mota = m.mota;
    const std::string label = tj.at("label").get<std::string>();
    json r = io::report_to_json(rep, m);
    r["label"] = label;
    r["variant"] = tj.at("variant");
    r["ttt_iters"] = tj.at("ttt_iters");
    r["tracks_sha256"] = io::sha256_file(tp);
    r["detections_sha256"] = dsha;
    r["run_config"] = tj.at("config");
    r["run_seed"] = tj.at("seed");
    runs.push_back(std::move(r));
    inputs["tracks:" + label] = io::sha256_file(tp);

    using io::fmt_double;
    csv += label + "," + tj.at("variant").get<std::string>() + "," + std::to_string(tj.at("ttt_iters").get<int>()) +
           "," + fmt_double(rep.ap, 6) + "," + fmt_double(rep.ap50, 6) + "," + fmt_double(rep.ap75, 6) + "," +
           fmt_double(rep.ar1, 6) + "," + fmt_double(rep.ar10, 6) + "," + fmt_double(m.mota, 6) + "," +
           std::to_string(m.false_negatives) + "," + std::to_string(m.false_positives) + "," +
           std::to_string(m.id_switches) + "," + std::to_string(m.id_merges) + "," + std::to_string(m.new_objects) +
           "," + std::to_string(m.total_gt) + "\n";
  }
  RunConfig cfg = load_config(c);
  json prov = provenance(cfg, inputs);
  prov["iou_gate"] = iou_gate;
  const fs::path root = c.out;
  io::atomic_write(root / "report.csv", csv_preamble(prov) + csv);
  json rep = prov;
  rep["schema_version"] = io::kSchemaVersion;
  rep["kind"] = "eval_report";
  rep["runs"] = std::move(runs);
  io::write_json(root / "report.json", rep);
  std::printf("%s", csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised instance tracking on synthetic videos"};
  app.require_subcommand(1);

  Common gen_c;
  std::optional<int> num_test, num_unlabeled, num_images;
  std::optional<double> drift;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--num-test", num_test);
  gen->add_option("--num-unlabeled", num_unlabeled);
  gen->add_option("--num-images", num_images, "labeled image source sequences");
  gen->add_option("--drift", drift, "per-frame drift of the video splits");

  Common train_c;
  std::string train_data, variant = "ic_me_cyc";
  std::optional<int> sup_steps, cyc_steps, chain_k;
  std::optional<double> label_noise;
  auto* train = app.add_subcommand("train", "train an embedding head");
  add_common(train, train_c);
  train->add_option("--data", train_data)->required();
  train->add_option("--variant", variant, "ic | ic_me | ic_me_cyc");
  train->add_option("--sup-steps", sup_steps);
  train->add_option("--cyc-steps", cyc_steps);
  train->add_option("--chain-k", chain_k);
  train->add_option("--label-noise", label_noise);

  Common track_c;
  TrackFlags tf;
  auto* track = app.add_subcommand("track", "track the test sequences");
  add_common(track, track_c);
  track->add_option("--data", tf.data)->required();
  track->add_option("--checkpoint", tf.checkpoint);
  track->add_flag("--baseline", tf.baseline, "spatial-distance + category tracker");
  track->add_flag("--oracle", tf.oracle, "ground-truth identities");
  track->add_option("--ttt-iters", tf.ttt_iters);
  track->add_option("--bi-softmax", tf.bi_softmax, "on | off");
  track->add_option("--postprocess", tf.postprocess, "on | off");
  track->add_option("--assignment", tf.assignment, "greedy | hungarian");
  track->add_option("--tau", tf.tau, "new-object threshold");
  track->add_flag("--render", tf.render, "write one PPM per frame");
  track->add_option("--label", tf.label, "run name in the output manifest");

  Common eval_c;
  std::string eval_data;
  std::vector<std::string> track_dirs;
  double iou_gate = 0.5;
  auto* eval = app.add_subcommand("eval", "score tracking runs");
  add_common(eval, eval_c);
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--tracks", track_dirs, "run directories written by track")->required();
  eval->add_option("--iou-gate", iou_gate, "mask IoU gate for MOTA matching");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(gen_c, num_test, num_unlabeled, num_images, drift);
    if (*train) return cmd_train(train_c, train_data, variant, sup_steps, cyc_steps, chain_k, label_noise);
    if (*track) return cmd_track(track_c, tf);
    if (*eval) return cmd_eval(eval_c, eval_data, track_dirs, iou_gate);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
