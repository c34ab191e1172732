#pragma once

// Image-supervised embedding losses. Every loss returns its value together
// with the analytic gradient with respect to the full embedding field.
//
//   centers      C_i = mean of f_q over the cells of instance i
//   similarity   S   = row-softmax(C C^T)
//   center       sum_i sum_{q in i} |C_i - f_q|_1
//   contra       (1/K) sum_i -log S(i,i)
//   ic           center + lambda * contra
//   entropy      H = -sum_i sum_{j != i} S(i,j) log S(i,j)   (maximized)
//   infonce      per-query -log exp(f_p.f_q) / sum_{k in other instances} exp(f_k.f_q)

#include <cstdint>
#include <string>
#include <vector>

#include "semitrack/matrix.hpp"

namespace semitrack {

/// Head output: one D-dimensional embedding per grid cell (row = cell).
struct EmbeddingField {
  int grid_size = 0;
  Matrix values;

  EmbeddingField() = default;
  EmbeddingField(int grid, int dim) : grid_size(grid), values(static_cast<std::size_t>(grid) * grid, dim) {}
  EmbeddingField(int grid, Matrix v) : grid_size(grid), values(std::move(v)) {}

  int dim() const { return static_cast<int>(values.cols()); }
  int cells() const { return static_cast<int>(values.rows()); }
};

/// Cell memberships of K instances. Sets must be pairwise disjoint.
struct InstanceCellSets {
  std::vector<std::vector<int>> sets;

  int size() const { return static_cast<int>(sets.size()); }
  /// Throws std::invalid_argument unless the sets are non-empty, in range and disjoint.
  void validate(int num_cells) const;
};

using CenterSet = Matrix;         // K x D
using SimilarityMatrix = Matrix;  // K x K, row-stochastic

struct LossGrad {
  double value = 0.0;
  Matrix grad;  // cells x D
  std::vector<std::string> warnings;
};

struct ICConfig {
  double lambda = 1.0;
  double mu = 0.1;
};

CenterSet compute_centers(const EmbeddingField& f, const InstanceCellSets& cells);
SimilarityMatrix similarity_matrix(const CenterSet& centers);

LossGrad center_loss(const EmbeddingField& f, const InstanceCellSets& cells);
LossGrad contra_loss(const EmbeddingField& f, const InstanceCellSets& cells);
LossGrad ic_loss(const EmbeddingField& f, const InstanceCellSets& cells, const ICConfig& cfg);
/// Returns H and dH/df; training minimizes -mu * H.
LossGrad me_entropy(const EmbeddingField& f, const InstanceCellSets& cells);
LossGrad infonce_loss(const EmbeddingField& f, const InstanceCellSets& cells, std::uint64_t rng_seed);

/// Backpropagates a gradient on the similarity logits C C^T to the cells.
/// Exposed for the correspondence module and for tests.
Matrix gram_grad_to_cells(const Matrix& dlogits, const CenterSet& centers, const InstanceCellSets& cells,
                          std::size_t num_cells);

/// Softmax backward for one row-softmax: given probabilities p and dL/dp,
/// returns dL/dlogits.
Matrix row_softmax_backward(const Matrix& probs, const Matrix& dprobs);

}  // namespace semitrack
