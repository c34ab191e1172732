#pragma once

// Dense row-parallel kernels shared by the loss, correspondence and tracker
// modules. Each kernel has a serial reference in kernels::serial and an
// OpenMP version in kernels::omp; the unqualified names forward to omp.
// Both variants perform the same floating-point operations per output row,
// so their results are bitwise identical regardless of thread count.

#include <cstddef>
#include <exception>
#include <span>
#include <vector>

#include "semitrack/matrix.hpp"

namespace semitrack::kernels {

namespace serial {
/// Row-wise softmax of scale * a * b^T with row-max subtraction.
Matrix row_softmax_gram(const Matrix& a, const Matrix& b, double scale);
Matrix row_softmax(const Matrix& logits);
Matrix col_softmax(const Matrix& logits);
/// Cosine similarity of every row of a against every row of b.
Matrix cosine_similarity(const Matrix& a, const Matrix& b);
/// out = x * w^T + bias, optionally followed by tanh.
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> bias, bool apply_tanh);
}  // namespace serial

namespace omp {
Matrix row_softmax_gram(const Matrix& a, const Matrix& b, double scale);
Matrix row_softmax(const Matrix& logits);
Matrix col_softmax(const Matrix& logits);
Matrix cosine_similarity(const Matrix& a, const Matrix& b);
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> bias, bool apply_tanh);
}  // namespace omp

using omp::affine_rows;
using omp::col_softmax;
using omp::cosine_similarity;
using omp::row_softmax;
using omp::row_softmax_gram;

/// Runs fn(i) for i in [0, n) in parallel and stores each result in slot i.
/// Callers reduce the returned vector in index order, which keeps batch
/// reductions independent of the thread schedule.
/// The first exception raised by any fn(i) is rethrown on the calling thread.
template <typename Fn>
auto parallel_map(std::size_t n, Fn&& fn) -> std::vector<decltype(fn(std::size_t{0}))> {
  std::vector<decltype(fn(std::size_t{0}))> out(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      out[i] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

template <typename Fn>
auto serial_map(std::size_t n, Fn&& fn) -> std::vector<decltype(fn(std::size_t{0}))> {
  std::vector<decltype(fn(std::size_t{0}))> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
  return out;
}

int max_threads();

}  // namespace semitrack::kernels
