#include "semitrack/grid_assign.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace semitrack {

int Mask::count() const {
  return static_cast<int>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

Point center_of_mass(const Mask& mask) {
  double sx = 0, sy = 0;
  int n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        sx += x + 0.5;
        sy += y + 0.5;
        ++n;
      }
  if (n == 0) throw std::invalid_argument("degenerate instance");
  return {sx / n, sy / n};
}

BBox bbox_of(const Mask& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw std::invalid_argument("degenerate instance");
  return {double(x0), double(y0), double(x1 + 1), double(y1 + 1)};
}

AssignResult assign_instances(const std::vector<Mask>& masks, const GridAssignConfig& cfg) {
  if (masks.empty()) throw std::invalid_argument("assign_instances: no masks");
  if (cfg.epsilon <= 0.0 || cfg.epsilon > 1.0)
    throw std::invalid_argument("assign_instances: epsilon must be in (0, 1]");
  const int w = masks.front().width;
  const int h = masks.front().height;
  for (const Mask& m : masks)
    if (m.width != w || m.height != h) throw std::invalid_argument("assign_instances: mask size mismatch");

  AssignResult out;
  out.grid.grid_size = w;
  out.grid.labels.assign(static_cast<std::size_t>(w) * h, kBackground);
  std::vector<int> owner_area(out.grid.labels.size(), 0);

  for (int i = 0; i < static_cast<int>(masks.size()); ++i) {
    const Mask& m = masks[i];
    const int area = m.count();
    if (area == 0) {
      out.dropped.push_back(i);
      continue;
    }
    const Point c = center_of_mass(m);
    const BBox box = bbox_of(m);
    const double half_w = 0.5 * cfg.epsilon * box.width();
    const double half_h = 0.5 * cfg.epsilon * box.height();
    bool covered = false;
    for (int y = 0; y < h; ++y) {
      if (std::abs(y + 0.5 - c.y) > half_h) continue;
      for (int x = 0; x < w; ++x) {
        if (std::abs(x + 0.5 - c.x) > half_w) continue;
        covered = true;
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        int& label = out.grid.labels[idx];
        if (label == kBackground || area < owner_area[idx]) {
          label = i;
          owner_area[idx] = area;
        }
      }
    }
    if (!covered) out.dropped.push_back(i);
  }
  return out;
}

int mask_intersection(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("mask size mismatch");
  int n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] && b.bits[i]) ? 1 : 0;
  return n;
}

int mask_union(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("mask size mismatch");
  int n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] || b.bits[i]) ? 1 : 0;
  return n;
}

double mask_iou(const Mask& a, const Mask& b) {
  const int u = mask_union(a, b);
  if (u == 0) throw std::invalid_argument("mask_iou: both masks empty");
  return double(mask_intersection(a, b)) / u;
}

double bbox_iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<std::vector<int>> cells_by_label(const InstanceLabelGrid& grid, int num_labels) {
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(num_labels));
  for (int i = 0; i < static_cast<int>(grid.labels.size()); ++i) {
    const int l = grid.labels[i];
    if (l == kBackground) continue;
    if (l >= num_labels) throw std::invalid_argument("cells_by_label: label out of range");
    sets[l].push_back(i);
  }
  return sets;
}

std::vector<int> mask_cells(const Mask& mask) {
  std::vector<int> cells;
  for (int i = 0; i < static_cast<int>(mask.bits.size()); ++i)
    if (mask.bits[i]) cells.push_back(i);
  return cells;
}

}  // namespace semitrack
