#include "semitrack/config.hpp"

#include <set>
#include <stdexcept>
#include <string>

namespace semitrack {

using nlohmann::json;

namespace {

const char* momentum_name(MomentumMode m) { return m == MomentumMode::KeepOld ? "keep_old" : "weight_new"; }
const char* assignment_name(AssignmentMode m) { return m == AssignmentMode::Greedy ? "greedy" : "hungarian"; }

// One field list per struct drives both serialization directions.

struct Writer {
  json& out;

  template <class T>
  void operator()(const char* key, T& v) {
    out[key] = v;
  }
  void operator()(const char* key, std::optional<int>& v) { out[key] = v ? json(*v) : json(nullptr); }
  void operator()(const char* key, MomentumMode& v) { out[key] = momentum_name(v); }
  void operator()(const char* key, AssignmentMode& v) { out[key] = assignment_name(v); }
  template <class S, class F>
  void section(const char* key, S& s, F fields) {
    json sub = json::object();
    Writer w{sub};
    fields(w, s);
    out[key] = std::move(sub);
  }
};

struct Reader {
  const json& in;
  std::string path;
  std::set<std::string> seen;

  std::string where(const char* key) const { return path.empty() ? key : path + "." + key; }

  template <class T>
  void operator()(const char* key, T& v) {
    seen.insert(key);
    if (!in.contains(key)) return;
    try {
      v = in[key].get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value for " + where(key) + ": " + in[key].dump());
    }
  }
  void operator()(const char* key, std::optional<int>& v) {
    seen.insert(key);
    if (!in.contains(key)) return;
    if (in[key].is_null()) {
      v.reset();
      return;
    }
    int x = 0;
    (*this)(key, x);
    v = x;
  }
  void operator()(const char* key, MomentumMode& v) {
    std::string s = momentum_name(v);
    (*this)(key, s);
    if (s == "keep_old") v = MomentumMode::KeepOld;
    else if (s == "weight_new") v = MomentumMode::WeightNew;
    else throw std::invalid_argument("config: " + where(key) + " must be keep_old or weight_new");
  }
  void operator()(const char* key, AssignmentMode& v) {
    std::string s = assignment_name(v);
    (*this)(key, s);
    if (s == "greedy") v = AssignmentMode::Greedy;
    else if (s == "hungarian") v = AssignmentMode::Hungarian;
    else throw std::invalid_argument("config: " + where(key) + " must be greedy or hungarian");
  }
  template <class S, class F>
  void section(const char* key, S& s, F fields) {
    seen.insert(key);
    if (!in.contains(key)) return;
    if (!in[key].is_object()) throw std::invalid_argument("config: " + where(key) + " must be an object");
    Reader r{in[key], where(key), {}};
    fields(r, s);
    r.finish();
  }
  void finish() const {
    for (const auto& [k, v] : in.items())
      if (!seen.count(k)) throw std::invalid_argument("config: unknown key " + where(k.c_str()));
  }
};

template <class V>
void scene_fields(V& v, SceneSpec& s) {
  v("grid_size", s.grid_size);
  v("feature_dim", s.feature_dim);
  v("min_objects", s.min_objects);
  v("max_objects", s.max_objects);
  v("min_size", s.min_size);
  v("max_size", s.max_size);
  v("min_speed", s.min_speed);
  v("max_speed", s.max_speed);
  v("appearance_noise", s.appearance_noise);
  v("appearance_jitter", s.appearance_jitter);
  v("jitter_channels", s.jitter_channels);
  v("noisy_channels", s.noisy_channels);
  v("noisy_sigma", s.noisy_sigma);
  v("background_noise", s.background_noise);
  v("entry_exit_prob", s.entry_exit_prob);
  v("drift_shared", s.drift_shared);
  v("num_categories", s.num_categories);
  v("category_weight", s.category_weight);
  v("appearance_decay", s.appearance_decay);
  v("epsilon", s.epsilon);
}

template <class V>
void benchmark_fields(V& v, BenchmarkSpec& b) {
  v.section("scene", b.scene, [](auto& w, SceneSpec& s) { scene_fields(w, s); });
  v("num_image_sequences", b.num_image_sequences);
  v("image_length", b.image_length);
  v("num_unlabeled", b.num_unlabeled);
  v("unlabeled_length", b.unlabeled_length);
  v("num_test", b.num_test);
  v("test_length", b.test_length);
  v("video_drift", b.video_drift);
}

template <class V>
void train_fields(V& v, TrainConfig& t) {
  v("learning_rate", t.learning_rate);
  v("steps", t.steps);
  v("batch_size", t.batch_size);
  v("lambda", t.lambda);
  v("mu", t.mu);
  v("temperature", t.temperature);
  v("cycle_weight", t.cycle_weight);
  v("ttt_iters", t.ttt_iters);
  v("ttt_learning_rate", t.ttt_learning_rate);
  v("weight_decay", t.weight_decay);
  v("freeze_biases", t.freeze_biases);
  v("chain_k", t.chain_k);
  v("per_cell_cycle", t.per_cell_cycle);
  v("min_gap", t.sampling.min_gap);
  v("max_gap", t.sampling.max_gap);
}

template <class V>
void tracker_fields(V& v, TrackerConfig& t) {
  v("new_object_threshold", t.new_object_threshold);
  v("momentum", t.momentum);
  v("momentum_mode", t.momentum_mode);
  v("alpha", t.alpha);
  v("beta", t.beta);
  v("gamma", t.gamma);
  v("use_bi_softmax", t.use_bi_softmax);
  v("use_postprocess", t.use_postprocess);
  v("assignment", t.assignment);
  v("similarity_scale", t.similarity_scale);
  v("max_age", t.max_age);
}

template <class V>
void spatial_fields(V& v, SpatialTrackerConfig& s) {
  v("max_distance", s.max_distance);
  v("require_same_category", s.require_same_category);
  v("max_age", s.max_age);
}

template <class V>
void shape_fields(V& v, HeadShape& s) {
  v("in_dim", s.in_dim);
  v("hidden", s.hidden);
  v("out_dim", s.out_dim);
  v("video_head", s.video_head);
}

template <class V>
void run_fields(V& v, RunConfig& c) {
  v("seed", c.seed);
  v.section("benchmark", c.benchmark, [](auto& w, BenchmarkSpec& b) { benchmark_fields(w, b); });
  v.section("head", c.ladder.shape, [](auto& w, HeadShape& s) { shape_fields(w, s); });
  v.section("supervised", c.ladder.supervised, [](auto& w, TrainConfig& t) { train_fields(w, t); });
  v.section("correspondence", c.ladder.correspondence, [](auto& w, TrainConfig& t) { train_fields(w, t); });
  v.section("tracker", c.ladder.tracker, [](auto& w, TrackerConfig& t) { tracker_fields(w, t); });
  v.section("spatial", c.ladder.spatial, [](auto& w, SpatialTrackerConfig& s) { spatial_fields(w, s); });
  v("label_noise", c.ladder.label_noise);
  v("joint_cycle", c.ladder.joint_cycle);
}

}  // namespace

json to_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  json out = json::object();
  Writer w{out};
  run_fields(w, copy);
  return out;
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  Reader r{j, "", {}};
  run_fields(r, base);
  r.finish();
  return base;
}

}  // namespace semitrack
