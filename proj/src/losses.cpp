#include "semitrack/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "semitrack/kernels.hpp"

namespace semitrack {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_inputs(const EmbeddingField& f, const InstanceCellSets& cells) {
  if (f.dim() < 1) throw std::invalid_argument("embedding dim must be >= 1");
  cells.validate(f.cells());
}

}  // namespace

void InstanceCellSets::validate(int num_cells) const {
  std::vector<char> seen(static_cast<std::size_t>(std::max(num_cells, 0)), 0);
  for (const auto& s : sets) {
    if (s.empty()) throw std::invalid_argument("instance with no cells");
    for (int c : s) {
      if (c < 0 || c >= num_cells) throw std::invalid_argument("cell index out of range");
      if (seen[c]) throw std::invalid_argument("instance cell sets overlap");
      seen[c] = 1;
    }
  }
}

CenterSet compute_centers(const EmbeddingField& f, const InstanceCellSets& cells) {
  check_inputs(f, cells);
  const std::size_t d = f.values.cols();
  CenterSet c(cells.sets.size(), d);
  for (std::size_t i = 0; i < cells.sets.size(); ++i) {
    auto ci = c.row(i);
    for (int q : cells.sets[i]) {
      auto fq = f.values.row(q);
      for (std::size_t k = 0; k < d; ++k) ci[k] += fq[k];
    }
    const double inv = 1.0 / static_cast<double>(cells.sets[i].size());
    for (double& v : ci) v *= inv;
  }
  return c;
}

SimilarityMatrix similarity_matrix(const CenterSet& centers) {
  if (centers.rows() == 0) throw std::invalid_argument("similarity_matrix: no centers");
  if (!all_finite(centers.data())) throw std::invalid_argument("similarity_matrix: non-finite centers");
  return kernels::row_softmax_gram(centers, centers, 1.0);
}

Matrix row_softmax_backward(const Matrix& probs, const Matrix& dprobs) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double inner = dot(probs.row(i), dprobs.row(i));
    for (std::size_t j = 0; j < probs.cols(); ++j) out(i, j) = probs(i, j) * (dprobs(i, j) - inner);
  }
  return out;
}

Matrix gram_grad_to_cells(const Matrix& dlogits, const CenterSet& centers, const InstanceCellSets& cells,
                          std::size_t num_cells) {
  // logits = C C^T  =>  dC = (dG + dG^T) C
  const std::size_t k = centers.rows();
  const std::size_t d = centers.cols();
  Matrix sym(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) sym(i, j) = dlogits(i, j) + dlogits(j, i);
  const Matrix dc = matmul(sym, centers);
  Matrix grad(num_cells, d);
  for (std::size_t i = 0; i < k; ++i) {
    const double inv = 1.0 / static_cast<double>(cells.sets[i].size());
    for (int q : cells.sets[i]) {
      auto g = grad.row(q);
      for (std::size_t c = 0; c < d; ++c) g[c] = dc(i, c) * inv;
    }
  }
  return grad;
}

LossGrad center_loss(const EmbeddingField& f, const InstanceCellSets& cells) {
  const CenterSet centers = compute_centers(f, cells);
  const std::size_t d = f.values.cols();
  LossGrad out;
  out.grad = Matrix(f.values.rows(), d);
  std::vector<double> sign_sum(d);
  for (std::size_t i = 0; i < cells.sets.size(); ++i) {
    const auto& members = cells.sets[i];
    auto ci = centers.row(i);
    std::fill(sign_sum.begin(), sign_sum.end(), 0.0);
    for (int q : members) {
      auto fq = f.values.row(q);
      auto gq = out.grad.row(q);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = ci[c] - fq[c];
        out.value += std::abs(diff);
        const double s = sign0(diff);
        sign_sum[c] += s;
        gq[c] = -s;
      }
    }
    // d|C - f_q| / d f_r picks up 1/N from C plus -s_r from the direct term.
    const double inv = 1.0 / static_cast<double>(members.size());
    for (int q : members) {
      auto gq = out.grad.row(q);
      for (std::size_t c = 0; c < d; ++c) gq[c] += sign_sum[c] * inv;
    }
  }
  return out;
}

LossGrad contra_loss(const EmbeddingField& f, const InstanceCellSets& cells) {
  check_inputs(f, cells);
  LossGrad out;
  out.grad = Matrix(f.values.rows(), f.values.cols());
  const std::size_t k = cells.sets.size();
  if (k < 2) return out;
  const CenterSet centers = compute_centers(f, cells);
  const SimilarityMatrix s = similarity_matrix(centers);
  const double inv_k = 1.0 / static_cast<double>(k);
  Matrix dlogits(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    out.value -= std::log(s(i, i)) * inv_k;
    for (std::size_t j = 0; j < k; ++j) dlogits(i, j) = (s(i, j) - (i == j ? 1.0 : 0.0)) * inv_k;
  }
  out.grad = gram_grad_to_cells(dlogits, centers, cells, f.values.rows());
  return out;
}

LossGrad ic_loss(const EmbeddingField& f, const InstanceCellSets& cells, const ICConfig& cfg) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("ic_loss: lambda must be >= 0");
  LossGrad out = center_loss(f, cells);
  if (cfg.lambda == 0.0) return out;
  LossGrad contra = contra_loss(f, cells);
  out.value += cfg.lambda * contra.value;
  contra.grad *= cfg.lambda;
  out.grad += contra.grad;
  return out;
}

LossGrad me_entropy(const EmbeddingField& f, const InstanceCellSets& cells) {
  check_inputs(f, cells);
  LossGrad out;
  out.grad = Matrix(f.values.rows(), f.values.cols());
  const std::size_t k = cells.sets.size();
  if (k < 2) return out;
  const CenterSet centers = compute_centers(f, cells);
  const SimilarityMatrix s = similarity_matrix(centers);
  Matrix dprobs(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j || s(i, j) <= 0.0) continue;
      const double logp = std::log(s(i, j));
      out.value -= s(i, j) * logp;
      dprobs(i, j) = -(logp + 1.0);
    }
  const Matrix dlogits = row_softmax_backward(s, dprobs);
  out.grad = gram_grad_to_cells(dlogits, centers, cells, f.values.rows());
  return out;
}

LossGrad infonce_loss(const EmbeddingField& f, const InstanceCellSets& cells, std::uint64_t rng_seed) {
  check_inputs(f, cells);
  if (cells.size() < 2) throw std::invalid_argument("infonce_loss: needs at least two instances");
  const std::size_t d = f.values.cols();
  LossGrad out;
  out.grad = Matrix(f.values.rows(), d);
  std::mt19937_64 rng(rng_seed);

  std::size_t queries = 0;
  std::vector<int> negatives;
  std::vector<double> logits;
  for (std::size_t i = 0; i < cells.sets.size(); ++i) {
    const auto& members = cells.sets[i];
    if (members.size() < 2) {
      out.warnings.push_back("infonce_loss: instance " + std::to_string(i) + " has one cell; skipped as query");
      continue;
    }
    negatives.clear();
    for (std::size_t j = 0; j < cells.sets.size(); ++j)
      if (j != i) negatives.insert(negatives.end(), cells.sets[j].begin(), cells.sets[j].end());

    for (std::size_t a = 0; a < members.size(); ++a) {
      const int q = members[a];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 2);
      std::size_t b = pick(rng);
      if (b >= a) ++b;
      const int p = members[b];
      auto fq = f.values.row(q);
      auto fp = f.values.row(p);

      logits.resize(negatives.size());
      for (std::size_t n = 0; n < negatives.size(); ++n) logits[n] = dot(f.values.row(negatives[n]), fq);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        sum += l;
      }
      out.value += -dot(fp, fq) + mx + std::log(sum);

      // Weights are accumulated unscaled and normalised by the query count below.
      auto gq = out.grad.row(q);
      auto gp = out.grad.row(p);
      for (std::size_t c = 0; c < d; ++c) {
        gq[c] -= fp[c];
        gp[c] -= fq[c];
      }
      for (std::size_t n = 0; n < negatives.size(); ++n) {
        const double w = logits[n] / sum;
        auto fk = f.values.row(negatives[n]);
        auto gk = out.grad.row(negatives[n]);
        for (std::size_t c = 0; c < d; ++c) {
          gq[c] += w * fk[c];
          gk[c] += w * fq[c];
        }
      }
      ++queries;
    }
  }
  if (queries == 0) {
    out.grad.fill(0.0);
    return out;
  }
  const double inv = 1.0 / static_cast<double>(queries);
  out.value *= inv;
  out.grad *= inv;
  return out;
}

}  // namespace semitrack
