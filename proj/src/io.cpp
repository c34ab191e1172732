#include "semitrack/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace semitrack::io {

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("read failed: " + path.string());
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename to " + path.string() + ": " + ec.message());
  }
}

std::string dump(const json& j) { return j.dump() + "\n"; }

void write_json(const fs::path& path, const json& j) { atomic_write(path, dump(j)); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void check_schema(const json& j, const std::string& kind, const fs::path& source) {
  if (!j.is_object() || !j.contains("schema_version") || !j.contains("kind"))
    throw std::runtime_error(source.string() + ": missing schema_version/kind");
  if (j["schema_version"] != kSchemaVersion)
    throw std::runtime_error(source.string() + ": unsupported schema_version " + j["schema_version"].dump());
  if (j["kind"] != kind)
    throw std::runtime_error(source.string() + ": expected kind " + kind + ", got " + j["kind"].dump());
}

json mask_to_json(const Mask& m) {
  std::vector<int> counts;
  std::uint8_t cur = 0;
  int run = 0;
  for (std::uint8_t b : m.bits) {
    const std::uint8_t v = b ? 1 : 0;
    if (v != cur) {
      counts.push_back(run);
      run = 0;
      cur = v;
    }
    ++run;
  }
  counts.push_back(run);
  return {{"size", {m.width, m.height}}, {"counts", counts}};
}

Mask mask_from_json(const json& j) {
  const auto size = j.at("size").get<std::vector<int>>();
  if (size.size() != 2 || size[0] < 0 || size[1] < 0) throw std::runtime_error("mask: bad size");
  Mask m(size[0], size[1]);
  const std::size_t n = m.bits.size();
  if (j.contains("bits")) {
    const auto bits = j["bits"].get<std::string>();
    if (bits.size() != n) throw std::runtime_error("mask: bit list length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      if (bits[i] != '0' && bits[i] != '1') throw std::runtime_error("mask: bits must be '0' or '1'");
      m.bits[i] = bits[i] == '1';
    }
    return m;
  }
  std::size_t pos = 0;
  std::uint8_t v = 0;
  for (int c : j.at("counts").get<std::vector<int>>()) {
    if (c < 0 || pos + static_cast<std::size_t>(c) > n) throw std::runtime_error("mask: run lengths exceed size");
    std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(pos), c, v);
    pos += static_cast<std::size_t>(c);
    v ^= 1;
  }
  if (pos != n) throw std::runtime_error("mask: run lengths do not cover the mask");
  return m;
}

json bbox_to_json(const BBox& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

BBox bbox_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw std::runtime_error("bbox: expected [x_min, y_min, x_max, y_max]");
  return {v[0], v[1], v[2], v[3]};
}

json frame_annotation(int frame_id, const std::vector<FrameObject>& objects, bool with_track_ids) {
  json inst = json::array();
  for (const auto& o : objects) {
    json e = {{"category", o.category}, {"mask", mask_to_json(o.mask)}, {"bbox", bbox_to_json(o.bbox)}};
    if (with_track_ids) e["track_id"] = o.track_id;
    inst.push_back(std::move(e));
  }
  return {{"frame_id", frame_id}, {"instances", std::move(inst)}};
}

namespace {

constexpr char kMagic[4] = {'S', 'T', 'F', 'B'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr std::uint32_t kDtypeF64 = 1;

template <class T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out += static_cast<char>((u >> (8 * i)) & 0xff);
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) throw std::runtime_error("feature blob: truncated");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return std::bit_cast<T>(u);
}

json labels_to_json(const InstanceLabelGrid& g) { return g.labels; }

InstanceLabelGrid labels_from_json(const json& j, int grid_size, int num_objects) {
  InstanceLabelGrid g;
  g.grid_size = grid_size;
  g.labels = j.get<std::vector<int>>();
  if (g.labels.size() != static_cast<std::size_t>(grid_size) * grid_size)
    throw std::runtime_error("labels: size does not match grid");
  for (int l : g.labels)
    if (l != kBackground && (l < 0 || l >= num_objects)) throw std::runtime_error("labels: index out of range");
  return g;
}

std::vector<FrameObject> objects_from_json(const json& inst, int grid_size, bool with_track_ids) {
  std::vector<FrameObject> out;
  for (const auto& e : inst) {
    FrameObject o;
    if (with_track_ids) o.track_id = e.at("track_id").get<int>();
    o.category = e.at("category").get<int>();
    o.mask = mask_from_json(e.at("mask"));
    o.bbox = bbox_from_json(e.at("bbox"));
    if (o.mask.width != grid_size || o.mask.height != grid_size)
      throw std::runtime_error("annotation: mask size does not match grid");
    out.push_back(std::move(o));
  }
  return out;
}

fs::path blob_path(const fs::path& dir, const std::string& stem) { return dir / (stem + ".feat"); }

std::vector<Matrix> load_blob(const fs::path& json_path, const json& j, std::size_t frames, std::size_t cells,
                              std::size_t channels) {
  const fs::path blob = json_path.parent_path() / j.at("features").at("file").get<std::string>();
  const std::string bytes = read_file(blob);
  if (sha256_hex(bytes) != j["features"].at("sha256").get<std::string>())
    throw std::runtime_error(blob.string() + ": checksum mismatch");
  auto out = decode_features(bytes);
  if (out.size() != frames || (frames > 0 && (out[0].rows() != cells || out[0].cols() != channels)))
    throw std::runtime_error(blob.string() + ": dimensions do not match " + json_path.string());
  return out;
}

}  // namespace

std::string encode_features(const std::vector<Matrix>& frames) {
  const std::uint64_t rows = frames.empty() ? 0 : frames[0].rows();
  const std::uint64_t cols = frames.empty() ? 0 : frames[0].cols();
  std::string out(kMagic, 4);
  put_le(out, kBlobVersion);
  put_le(out, kDtypeF64);
  put_le(out, std::uint32_t{3});
  put_le(out, static_cast<std::uint64_t>(frames.size()));
  put_le(out, rows);
  put_le(out, cols);
  out.reserve(out.size() + frames.size() * rows * cols * 8);
  for (const Matrix& m : frames) {
    if (m.rows() != rows || m.cols() != cols) throw std::invalid_argument("encode_features: ragged frames");
    for (double v : m.data()) put_le(out, v);
  }
  return out;
}

std::vector<Matrix> decode_features(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("feature blob: bad magic");
  std::size_t pos = 4;
  if (get_le<std::uint32_t>(bytes, pos) != kBlobVersion) throw std::runtime_error("feature blob: unsupported version");
  if (get_le<std::uint32_t>(bytes, pos) != kDtypeF64) throw std::runtime_error("feature blob: unsupported dtype");
  if (get_le<std::uint32_t>(bytes, pos) != 3) throw std::runtime_error("feature blob: expected rank 3");
  const auto n = get_le<std::uint64_t>(bytes, pos);
  const auto rows = get_le<std::uint64_t>(bytes, pos);
  const auto cols = get_le<std::uint64_t>(bytes, pos);
  if ((bytes.size() - pos) / 8 != n * rows * cols || (bytes.size() - pos) % 8 != 0)
    throw std::runtime_error("feature blob: payload size does not match header");
  std::vector<Matrix> out;
  for (std::uint64_t f = 0; f < n; ++f) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = get_le<double>(bytes, pos);
    out.push_back(std::move(m));
  }
  return out;
}

fs::path write_sequence(const fs::path& dir, const std::string& stem, const SynthSequence& seq) {
  std::vector<Matrix> feats;
  json frames = json::array();
  for (int t = 0; t < seq.length(); ++t) {
    const SynthFrame& fr = seq.frames[t];
    feats.push_back(fr.features);
    json f = frame_annotation(t, fr.objects, true);
    f["labels"] = labels_to_json(fr.labels);
    frames.push_back(std::move(f));
  }
  const std::string blob = encode_features(feats);
  atomic_write(blob_path(dir, stem), blob);
  const json j = {{"schema_version", kSchemaVersion},
                  {"kind", "sequence"},
                  {"name", seq.name},
                  {"grid_size", seq.grid_size},
                  {"feature_dim", seq.feature_dim},
                  {"features", {{"file", stem + ".feat"}, {"sha256", sha256_hex(blob)}}},
                  {"frames", std::move(frames)}};
  const fs::path path = dir / (stem + ".json");
  write_json(path, j);
  return path;
}

SynthSequence read_sequence(const fs::path& json_path) {
  const json j = read_json(json_path);
  check_schema(j, "sequence", json_path);
  try {
    SynthSequence seq;
    seq.name = j.at("name").get<std::string>();
    seq.grid_size = j.at("grid_size").get<int>();
    seq.feature_dim = j.at("feature_dim").get<int>();
    const json& frames = j.at("frames");
    auto feats = load_blob(json_path, j, frames.size(), static_cast<std::size_t>(seq.grid_size) * seq.grid_size,
                           static_cast<std::size_t>(seq.feature_dim));
    for (std::size_t t = 0; t < frames.size(); ++t) {
      SynthFrame fr;
      fr.features = std::move(feats[t]);
      fr.objects = objects_from_json(frames[t].at("instances"), seq.grid_size, true);
      fr.labels = labels_from_json(frames[t].at("labels"), seq.grid_size, static_cast<int>(fr.objects.size()));
      seq.frames.push_back(std::move(fr));
    }
    return seq;
  } catch (const json::exception& e) {
    throw std::runtime_error(json_path.string() + ": " + e.what());
  }
}

fs::path write_images(const fs::path& dir, const std::string& stem, const std::vector<LabeledImage>& images) {
  std::vector<Matrix> feats;
  json frames = json::array();
  int grid = 0, dim = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const LabeledImage& im = images[i];
    if (i == 0) {
      grid = im.grid_size;
      dim = static_cast<int>(im.features.cols());
    } else if (im.grid_size != grid || static_cast<int>(im.features.cols()) != dim) {
      throw std::invalid_argument("write_images: mixed grid sizes or feature dims");
    }
    feats.push_back(im.features);
    std::vector<FrameObject> objs;
    for (std::size_t k = 0; k < im.masks.size(); ++k) objs.push_back({0, im.categories[k], im.masks[k], im.boxes[k]});
    json f = frame_annotation(static_cast<int>(i), objs, false);
    f["labels"] = labels_to_json(im.labels);
    frames.push_back(std::move(f));
  }
  const std::string blob = encode_features(feats);
  atomic_write(blob_path(dir, stem), blob);
  const json j = {{"schema_version", kSchemaVersion},
                  {"kind", "images"},
                  {"grid_size", grid},
                  {"feature_dim", dim},
                  {"features", {{"file", stem + ".feat"}, {"sha256", sha256_hex(blob)}}},
                  {"frames", std::move(frames)}};
  const fs::path path = dir / (stem + ".json");
  write_json(path, j);
  return path;
}

std::vector<LabeledImage> read_images(const fs::path& json_path) {
  const json j = read_json(json_path);
  check_schema(j, "images", json_path);
  try {
    const int grid = j.at("grid_size").get<int>();
    const int dim = j.at("feature_dim").get<int>();
    const json& frames = j.at("frames");
    auto feats = load_blob(json_path, j, frames.size(), static_cast<std::size_t>(grid) * grid,
                           static_cast<std::size_t>(dim));
    std::vector<LabeledImage> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      LabeledImage im;
      im.grid_size = grid;
      im.features = std::move(feats[i]);
      for (auto& o : objects_from_json(frames[i].at("instances"), grid, false)) {
        im.masks.push_back(std::move(o.mask));
        im.categories.push_back(o.category);
        im.boxes.push_back(o.bbox);
      }
      im.labels = labels_from_json(frames[i].at("labels"), grid, static_cast<int>(im.masks.size()));
      out.push_back(std::move(im));
    }
    return out;
  } catch (const json::exception& e) {
    throw std::runtime_error(json_path.string() + ": " + e.what());
  }
}

json detections_to_json(const std::vector<std::vector<Detection>>& frames) {
  json out = json::array();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    json dets = json::array();
    for (const Detection& d : frames[t])
      dets.push_back({{"category", d.category},
                      {"score", d.score},
                      {"bbox", bbox_to_json(d.bbox)},
                      {"mask", mask_to_json(d.mask)},
                      {"embedding", d.embedding}});
    out.push_back({{"frame_id", t}, {"detections", std::move(dets)}});
  }
  return out;
}

std::vector<std::vector<Detection>> detections_from_json(const json& j) {
  std::vector<std::vector<Detection>> out;
  for (const auto& f : j) {
    std::vector<Detection> dets;
    for (const auto& e : f.at("detections")) {
      Detection d;
      d.category = e.at("category").get<int>();
      d.score = e.at("score").get<double>();
      d.bbox = bbox_from_json(e.at("bbox"));
      d.mask = mask_from_json(e.at("mask"));
      d.embedding = e.at("embedding").get<std::vector<double>>();
      dets.push_back(std::move(d));
    }
    out.push_back(std::move(dets));
  }
  return out;
}

json tracks_to_json(const TrackResult& r) {
  json frames = json::array();
  for (std::size_t t = 0; t < r.track_ids.size(); ++t) {
    json a = json::array();
    for (std::size_t n = 0; n < r.track_ids[t].size(); ++n)
      a.push_back({{"detection_idx", n}, {"track_id", r.track_ids[t][n]}});
    frames.push_back({{"frame_id", t}, {"assignments", std::move(a)}});
  }
  json births = json::array();
  for (const auto& b : r.births)
    births.push_back({{"frame", b.frame}, {"detection_idx", b.detection_idx}, {"track_id", b.track_id}});
  return {{"frames", std::move(frames)}, {"births", std::move(births)}};
}

TrackResult tracks_from_json(const json& j) {
  TrackResult r;
  for (const auto& f : j.at("frames")) {
    const auto& a = f.at("assignments");
    std::vector<int> ids(a.size(), -1);
    for (const auto& e : a) {
      const auto idx = e.at("detection_idx").get<std::size_t>();
      if (idx >= ids.size() || ids[idx] != -1) throw std::runtime_error("tracks: bad detection_idx");
      ids[idx] = e.at("track_id").get<int>();
    }
    r.track_ids.push_back(std::move(ids));
  }
  for (const auto& b : j.at("births"))
    r.births.push_back({b.at("frame").get<int>(), b.at("detection_idx").get<int>(), b.at("track_id").get<int>()});
  return r;
}

std::string track_summary_csv(const std::vector<std::string>& names, const std::vector<TrackResult>& results,
                              bool header) {
  if (names.size() != results.size()) throw std::invalid_argument("track_summary_csv: size mismatch");
  std::string out = header ? "sequence,frame,detections,births,tracks\n" : "";
  for (std::size_t s = 0; s < results.size(); ++s) {
    const TrackResult& r = results[s];
    std::set<int> seen;
    for (std::size_t t = 0; t < r.track_ids.size(); ++t) {
      int births = 0;
      for (const auto& b : r.births) births += b.frame == static_cast<int>(t);
      seen.insert(r.track_ids[t].begin(), r.track_ids[t].end());
      out += names[s] + "," + std::to_string(t) + "," + std::to_string(r.track_ids[t].size()) + "," +
             std::to_string(births) + "," + std::to_string(seen.size()) + "\n";
    }
  }
  return out;
}

json head_to_json(const EmbeddingHead& head) {
  const HeadShape& s = head.shape();
  return {{"shape", {{"in_dim", s.in_dim}, {"hidden", s.hidden}, {"out_dim", s.out_dim}, {"video_head", s.video_head}}},
          {"params", std::vector<double>(head.params().begin(), head.params().end())}};
}

EmbeddingHead head_from_json(const json& j) {
  const json& s = j.at("shape");
  EmbeddingHead head(HeadShape{s.at("in_dim").get<int>(), s.at("hidden").get<int>(), s.at("out_dim").get<int>(),
                               s.at("video_head").get<bool>()});
  const auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != head.num_params()) throw std::runtime_error("checkpoint: parameter count does not match shape");
  if (!all_finite(p)) throw std::runtime_error("checkpoint: non-finite parameters");
  std::copy(p.begin(), p.end(), head.params().begin());
  return head;
}

std::string fmt_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string loss_csv(const std::vector<std::pair<std::string, std::vector<LossRecord>>>& phases) {
  bool center = false, contra = false, entropy = false, cyc = false;
  for (const auto& [name, curve] : phases)
    for (const auto& r : curve) {
      center |= r.center.has_value();
      contra |= r.contra.has_value();
      entropy |= r.entropy.has_value();
      cyc |= r.cycle.has_value();
    }
  std::string out = "phase,step,loss_total";
  if (center) out += ",loss_center";
  if (contra) out += ",loss_contra";
  if (entropy) out += ",entropy";
  if (cyc) out += ",loss_cyc";
  out += "\n";
  auto opt = [](const std::optional<double>& v) { return "," + (v ? fmt_double(*v) : std::string()); };
  for (const auto& [name, curve] : phases)
    for (const auto& r : curve) {
      out += name + "," + std::to_string(r.step) + "," + fmt_double(r.total);
      if (center) out += opt(r.center);
      if (contra) out += opt(r.contra);
      if (entropy) out += opt(r.entropy);
      if (cyc) out += opt(r.cycle);
      out += "\n";
    }
  return out;
}

json report_to_json(const EvalReport& r, const MotaResult& m) {
  json per_class = json::object();
  for (const auto& [c, ap] : r.per_class_ap) per_class[std::to_string(c)] = ap;
  return {{"ap", r.ap},
          {"ap50", r.ap50},
          {"ap75", r.ap75},
          {"ar1", r.ar1},
          {"ar10", r.ar10},
          {"per_class_ap", std::move(per_class)},
          {"mota",
           {{"mota", m.mota},
            {"false_negatives", m.false_negatives},
            {"false_positives", m.false_positives},
            {"id_switches", m.id_switches},
            {"id_merges", m.id_merges},
            {"new_objects", m.new_objects},
            {"matches", m.matches},
            {"total_gt", m.total_gt}}}};
}

std::string render_ppm(int grid_size, const std::vector<std::pair<int, Mask>>& labeled, int cell_px) {
  if (grid_size < 1 || cell_px < 1) throw std::invalid_argument("render_ppm: bad size");
  std::vector<std::array<int, 3>> color(static_cast<std::size_t>(grid_size) * grid_size, {0, 0, 0});
  for (const auto& [id, m] : labeled) {
    if (m.width != grid_size || m.height != grid_size) throw std::invalid_argument("render_ppm: mask size mismatch");
    // Stable color per track id from a multiplicative hash.
    const std::uint32_t h = static_cast<std::uint32_t>(id + 1) * 2654435761u;
    const std::array<int, 3> c{64 + static_cast<int>(h >> 24) % 192, 64 + static_cast<int>((h >> 16) & 0xff) % 192,
                               64 + static_cast<int>((h >> 8) & 0xff) % 192};
    for (std::size_t i = 0; i < m.bits.size(); ++i)
      if (m.bits[i]) color[i] = c;
  }
  const int px = grid_size * cell_px;
  std::string out = "P6\n" + std::to_string(px) + " " + std::to_string(px) + "\n255\n";
  for (int y = 0; y < px; ++y)
    for (int x = 0; x < px; ++x)
      for (int ch : color[static_cast<std::size_t>(y / cell_px) * grid_size + x / cell_px]) out += static_cast<char>(ch);
  return out;
}

}  // namespace semitrack::io
