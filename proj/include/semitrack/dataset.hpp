#pragma once

#include <string>
#include <vector>

#include "semitrack/grid_assign.hpp"
#include "semitrack/losses.hpp"
#include "semitrack/matrix.hpp"

namespace semitrack {

struct FrameObject {
  int track_id = 0;
  int category = 0;
  Mask mask;
  BBox bbox;
};

struct SynthFrame {
  Matrix features;  // grid_size^2 x feature_dim
  std::vector<FrameObject> objects;
  InstanceLabelGrid labels;  // label i refers to objects[i]
};

struct SynthSequence {
  std::string name;
  int grid_size = 0;
  int feature_dim = 0;
  std::vector<SynthFrame> frames;

  int length() const { return static_cast<int>(frames.size()); }
};

/// A single annotated frame with no cross-frame identity.
struct LabeledImage {
  int grid_size = 0;
  Matrix features;
  std::vector<Mask> masks;
  std::vector<int> categories;
  std::vector<BBox> boxes;
  InstanceLabelGrid labels;
};

/// Per-frame features plus the valid-cell sets of each instance; the
/// training-time view of an unlabeled sequence.
struct VideoClip {
  int grid_size = 0;
  std::vector<Matrix> features;
  std::vector<InstanceCellSets> instances;

  int length() const { return static_cast<int>(features.size()); }
};

/// Non-empty label sets of a label grid, in label order.
InstanceCellSets instance_cells(const InstanceLabelGrid& labels);

}  // namespace semitrack
