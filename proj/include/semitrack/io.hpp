#pragma once

// File formats: annotation and sequence JSON, the binary feature blob,
// detections, tracks, checkpoints, loss curves and evaluation reports.
// Every JSON document carries a schema_version; writes are atomic.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semitrack/dataset.hpp"
#include "semitrack/metrics.hpp"
#include "semitrack/model.hpp"
#include "semitrack/tracker.hpp"

namespace semitrack::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

/// Hex SHA-256 of a byte string or of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

/// Writes to a sibling temp file, then renames over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

/// Compact, sorted keys, trailing newline.
std::string dump(const json& j);
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// Throws unless j.schema_version == kSchemaVersion and j.kind == kind.
void check_schema(const json& j, const std::string& kind, const fs::path& source);

// Masks are row-major. Written as run lengths starting with a run of zeros;
// a "bits" string of '0'/'1' is accepted on read.
json mask_to_json(const Mask& m);
Mask mask_from_json(const json& j);
json bbox_to_json(const BBox& b);
BBox bbox_from_json(const json& j);

/// {frame_id, instances: [{track_id?, category, mask, bbox}]}
json frame_annotation(int frame_id, const std::vector<FrameObject>& objects, bool with_track_ids);

// Feature blob: "STFB", u32 version, u32 dtype (1 = float64), u32 rank = 3,
// u64 dims[3] = {frames, cells, channels}, then little-endian doubles.
std::string encode_features(const std::vector<Matrix>& frames);
std::vector<Matrix> decode_features(std::string_view bytes);

/// Writes <stem>.json and <stem>.feat; returns the JSON path.
fs::path write_sequence(const fs::path& dir, const std::string& stem, const SynthSequence& seq);
SynthSequence read_sequence(const fs::path& json_path);

fs::path write_images(const fs::path& dir, const std::string& stem, const std::vector<LabeledImage>& images);
std::vector<LabeledImage> read_images(const fs::path& json_path);

json detections_to_json(const std::vector<std::vector<Detection>>& frames);
std::vector<std::vector<Detection>> detections_from_json(const json& j);

/// {frames: [{frame_id, assignments: [{detection_idx, track_id}]}], births}
json tracks_to_json(const TrackResult& r);
TrackResult tracks_from_json(const json& j);
/// sequence,frame,detections,births,tracks
std::string track_summary_csv(const std::vector<std::string>& names, const std::vector<TrackResult>& results,
                              bool header);

json head_to_json(const EmbeddingHead& head);
EmbeddingHead head_from_json(const json& j);

/// step,loss_total then whichever of loss_center,loss_contra,entropy,loss_cyc
/// any record carries; phase labels each row.
std::string loss_csv(const std::vector<std::pair<std::string, std::vector<LossRecord>>>& phases);

json report_to_json(const EvalReport& r, const MotaResult& m);

/// Binary pixel map (P6) of a label-colored grid; `cell_px` pixels per cell.
std::string render_ppm(int grid_size, const std::vector<std::pair<int, Mask>>& labeled, int cell_px);

/// printf-style "%.*g" with round-trip precision.
std::string fmt_double(double v, int digits = 17);

}  // namespace semitrack::io
