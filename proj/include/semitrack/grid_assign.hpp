#pragma once

// Grid-cell geometry: masks, boxes, and the center-region instance
// assignment that turns per-frame instance masks into cell labels.

#include <cstdint>
#include <utility>
#include <vector>

namespace semitrack {

/// Binary occupancy over a width x height cell grid, row-major
/// (cell index = y * width + x).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  int cell_count() const { return width * height; }
  int count() const;
  bool empty() const { return count() == 0; }

  bool operator==(const Mask&) const = default;
};

/// Axis-aligned box in continuous grid units.
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }

  bool operator==(const BBox&) const = default;
};

struct Point {
  double x = 0, y = 0;
};

struct GridAssignConfig {
  int grid_size = 16;
  double epsilon = 0.2;
};

inline constexpr int kBackground = -1;

/// Per-cell instance labels; kBackground or an index into the input masks.
struct InstanceLabelGrid {
  int grid_size = 0;
  std::vector<int> labels;

  bool operator==(const InstanceLabelGrid&) const = default;
};

struct AssignResult {
  InstanceLabelGrid grid;
  /// Input indices whose center region covered no cell center.
  std::vector<int> dropped;
};

/// Mean of set-cell centers, cells centered at integer + 0.5.
/// Throws std::invalid_argument("degenerate instance") for an empty mask.
Point center_of_mass(const Mask& mask);

/// Tight box around the set cells (cell (x,y) spans [x, x+1) x [y, y+1)).
BBox bbox_of(const Mask& mask);

/// Cells whose center lies inside the (cx, cy, eps*w, eps*h) center region
/// are labelled; overlapping regions go to the smaller-area instance, equal
/// areas to the lower index.
AssignResult assign_instances(const std::vector<Mask>& masks, const GridAssignConfig& cfg);

double mask_iou(const Mask& a, const Mask& b);
double bbox_iou(const BBox& a, const BBox& b);

int mask_intersection(const Mask& a, const Mask& b);
int mask_union(const Mask& a, const Mask& b);

/// Cell index lists per label 0..num_labels-1 (empty where a label is absent).
std::vector<std::vector<int>> cells_by_label(const InstanceLabelGrid& grid, int num_labels);

/// Set-cell indices of a mask.
std::vector<int> mask_cells(const Mask& mask);

}  // namespace semitrack
