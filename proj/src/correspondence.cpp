#include "semitrack/correspondence.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "semitrack/kernels.hpp"
#include "semitrack/losses.hpp"

namespace semitrack {

AffinityMatrix pairwise_affinity(const FrameInstanceSet& a, const FrameInstanceSet& b, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("pairwise_affinity: temperature must be > 0");
  if (a.embeddings.rows() == 0 || b.embeddings.rows() == 0)
    throw std::invalid_argument("pairwise_affinity: empty frame");
  return kernels::row_softmax_gram(a.embeddings, b.embeddings, 1.0 / temperature);
}

AffinityMatrix chain_affinity(const std::vector<AffinityMatrix>& chain) {
  if (chain.empty()) throw std::invalid_argument("chain_affinity: empty chain");
  AffinityMatrix out = chain.front();
  for (std::size_t i = 1; i < chain.size(); ++i) {
    if (out.cols() != chain[i].rows()) throw std::invalid_argument("chain_affinity: dimension mismatch");
    out = matmul(out, chain[i]);
  }
  return out;
}

std::vector<AffinityMatrix> round_trip_chain(const CycleBatch& batch, double temperature) {
  const int k = batch.chain_length();
  if (k < 1) throw std::invalid_argument("cycle batch needs at least two frames");
  for (const auto& fr : batch.frames)
    if (fr.embeddings.rows() == 0) throw std::invalid_argument("cycle batch has an empty frame");
  std::vector<AffinityMatrix> chain;
  chain.reserve(2 * k);
  for (int i = 0; i < k; ++i) chain.push_back(pairwise_affinity(batch.frames[i], batch.frames[i + 1], temperature));
  for (int i = k; i > 0; --i) chain.push_back(pairwise_affinity(batch.frames[i], batch.frames[i - 1], temperature));
  return chain;
}

CycleLoss cycle_loss(const CycleBatch& batch, double temperature) {
  const std::vector<AffinityMatrix> chain = round_trip_chain(batch, temperature);
  const int k = batch.chain_length();
  const std::size_t n = chain.size();

  // prefix[j] = X_0 ... X_{j-1}; suffix[j] = X_j ... X_{n-1}
  std::vector<Matrix> prefix(n + 1), suffix(n + 1);
  prefix[0] = Matrix::identity(chain.front().rows());
  for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = matmul(prefix[j], chain[j]);
  suffix[n] = Matrix::identity(chain.back().cols());
  for (std::size_t j = n; j-- > 0;) suffix[j] = matmul(chain[j], suffix[j + 1]);

  const Matrix& round_trip = prefix[n];
  const std::size_t p = round_trip.rows();
  CycleLoss out;
  Matrix d_round(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const double r = round_trip(i, i);
    out.value -= std::log(r) / static_cast<double>(p);
    d_round(i, i) = -1.0 / (r * static_cast<double>(p));
  }

  out.grads.reserve(batch.frames.size());
  for (const auto& fr : batch.frames) out.grads.emplace_back(fr.embeddings.rows(), fr.embeddings.cols());

  const double inv_t = 1.0 / temperature;
  for (std::size_t j = 0; j < n; ++j) {
    // dL/dX_j = prefix_j^T dR suffix_{j+1}^T
    const Matrix dx = matmul_bt(matmul_at(prefix[j], d_round), suffix[j + 1]);
    const Matrix dlogits = row_softmax_backward(chain[j], dx);
    // X_j = softmax(src tgt^T / T)
    const int src = j < static_cast<std::size_t>(k) ? static_cast<int>(j) : static_cast<int>(2 * k - j);
    const int tgt = j < static_cast<std::size_t>(k) ? src + 1 : src - 1;
    const Matrix& a = batch.frames[src].embeddings;
    const Matrix& b = batch.frames[tgt].embeddings;
    Matrix da = matmul(dlogits, b);
    Matrix db = matmul_at(dlogits, a);
    da *= inv_t;
    db *= inv_t;
    out.grads[src] += da;
    out.grads[tgt] += db;
  }
  return out;
}

std::vector<int> sample_frame_group(int sequence_length, int k, std::uint64_t rng_seed,
                                    const FrameGroupSampling& sampling) {
  if (k < 1) throw std::invalid_argument("sample_frame_group: k must be >= 1");
  if (sampling.min_gap < 1 || sampling.max_gap < sampling.min_gap)
    throw std::invalid_argument("sample_frame_group: invalid gap range");
  if (sequence_length < k * sampling.max_gap + 1)
    throw std::invalid_argument("sample_frame_group: sequence too short");
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> gap(sampling.min_gap, sampling.max_gap);
  std::vector<int> gaps(static_cast<std::size_t>(k));
  int span = 0;
  for (int& g : gaps) {
    g = gap(rng);
    span += g;
  }
  std::uniform_int_distribution<int> start(0, sequence_length - 1 - span);
  std::vector<int> idx{start(rng)};
  for (int g : gaps) idx.push_back(idx.back() + g);
  return idx;
}

}  // namespace semitrack
