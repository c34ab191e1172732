#pragma once

// Cycle-consistent instance correspondence across frames.
//
// A forward chain t -> t+1 -> ... -> t+k of row-softmax affinities is
// composed with the backward chain t+k -> ... -> t; the round trip should
// return every instance of frame t to itself.

#include <cstdint>
#include <vector>

#include "semitrack/matrix.hpp"

namespace semitrack {

/// Valid-instance (or valid-cell) embeddings of one frame, P x D.
struct FrameInstanceSet {
  Matrix embeddings;
  std::vector<int> ids;
};

using AffinityMatrix = Matrix;

struct CycleBatch {
  std::vector<FrameInstanceSet> frames;  // k + 1 frames in temporal order

  int chain_length() const { return static_cast<int>(frames.size()) - 1; }
};

struct CycleLoss {
  double value = 0.0;
  std::vector<Matrix> grads;  // one per frame, same shape as its embeddings
};

/// Row-softmax of a * b^T / temperature.
AffinityMatrix pairwise_affinity(const FrameInstanceSet& a, const FrameInstanceSet& b, double temperature);

/// Ordered product of the chain; throws on dimension mismatch.
AffinityMatrix chain_affinity(const std::vector<AffinityMatrix>& chain);

/// The forward/backward affinity chain for a batch. Backward affinities are
/// fresh softmaxes computed in the reverse direction.
std::vector<AffinityMatrix> round_trip_chain(const CycleBatch& batch, double temperature);

/// Row-averaged cross-entropy of the round-trip matrix against identity,
/// with gradients for every frame's embeddings.
CycleLoss cycle_loss(const CycleBatch& batch, double temperature);

struct FrameGroupSampling {
  int min_gap = 2;
  int max_gap = 8;
};

/// k+1 strictly increasing frame indices with consecutive gaps drawn
/// uniformly from [min_gap, max_gap]. Requires k >= 1 and
/// sequence_length >= k * max_gap + 1.
std::vector<int> sample_frame_group(int sequence_length, int k, std::uint64_t rng_seed,
                                    const FrameGroupSampling& sampling = {});

}  // namespace semitrack
