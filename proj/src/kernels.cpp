#include "semitrack/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace semitrack::kernels {

namespace {

// Per-row bodies shared by both variants so the arithmetic is identical.

void softmax_in_place(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

void gram_softmax_row(const Matrix& a, const Matrix& b, double scale, std::size_t i, Matrix& out) {
  auto dst = out.row(i);
  for (std::size_t j = 0; j < b.rows(); ++j) dst[j] = scale * dot(a.row(i), b.row(j));
  softmax_in_place(dst);
}

void col_softmax_col(const Matrix& logits, std::size_t j, Matrix& out) {
  const std::size_t n = logits.rows();
  double mx = logits(0, j);
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits(i, j));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out(i, j) = std::exp(logits(i, j) - mx);
    sum += out(i, j);
  }
  for (std::size_t i = 0; i < n; ++i) out(i, j) /= sum;
}

void cosine_row(const Matrix& a, const Matrix& b, const std::vector<double>& b_norms, std::size_t i, Matrix& out) {
  const double na = norm2(a.row(i));
  if (na == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm embedding");
  for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j)) / (na * b_norms[j]);
}

std::vector<double> row_norms_checked(const Matrix& b) {
  std::vector<double> norms(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) {
    norms[j] = norm2(b.row(j));
    if (norms[j] == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm embedding");
  }
  return norms;
}

void affine_row(const Matrix& x, const Matrix& w, std::span<const double> bias, bool apply_tanh, std::size_t i,
                Matrix& out) {
  auto dst = out.row(i);
  for (std::size_t o = 0; o < w.rows(); ++o) {
    double v = bias[o] + dot(w.row(o), x.row(i));
    dst[o] = apply_tanh ? std::tanh(v) : v;
  }
}

void check_same_cols(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.cols()) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

void check_affine(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  if (x.cols() != w.cols() || bias.size() != w.rows()) throw std::invalid_argument("affine_rows: dimension mismatch");
}

}  // namespace

namespace serial {

Matrix row_softmax_gram(const Matrix& a, const Matrix& b, double scale) {
  check_same_cols(a, b, "row_softmax_gram");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) gram_softmax_row(a, b, scale, i, out);
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out = logits;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_in_place(out.row(i));
  return out;
}

Matrix col_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  if (logits.rows() == 0) return out;
  for (std::size_t j = 0; j < logits.cols(); ++j) col_softmax_col(logits, j, out);
  return out;
}

Matrix cosine_similarity(const Matrix& a, const Matrix& b) {
  check_same_cols(a, b, "cosine_similarity");
  const auto norms = row_norms_checked(b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) cosine_row(a, b, norms, i, out);
  return out;
}

Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> bias, bool apply_tanh) {
  check_affine(x, w, bias);
  Matrix out(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) affine_row(x, w, bias, apply_tanh, i, out);
  return out;
}

}  // namespace serial

namespace omp {

Matrix row_softmax_gram(const Matrix& a, const Matrix& b, double scale) {
  check_same_cols(a, b, "row_softmax_gram");
  Matrix out(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) gram_softmax_row(a, b, scale, static_cast<std::size_t>(i), out);
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out = logits;
  const auto n = static_cast<std::ptrdiff_t>(out.rows());
#pragma omp parallel for if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) softmax_in_place(out.row(static_cast<std::size_t>(i)));
  return out;
}

Matrix col_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  if (logits.rows() == 0) return out;
  const auto n = static_cast<std::ptrdiff_t>(logits.cols());
#pragma omp parallel for if (n > 64)
  for (std::ptrdiff_t j = 0; j < n; ++j) col_softmax_col(logits, static_cast<std::size_t>(j), out);
  return out;
}

Matrix cosine_similarity(const Matrix& a, const Matrix& b) {
  check_same_cols(a, b, "cosine_similarity");
  const auto norms = row_norms_checked(b);
  for (std::size_t i = 0; i < a.rows(); ++i)
    if (norm2(a.row(i)) == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm embedding");
  Matrix out(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) cosine_row(a, b, norms, static_cast<std::size_t>(i), out);
  return out;
}

Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> bias, bool apply_tanh) {
  check_affine(x, w, bias);
  Matrix out(x.rows(), w.rows());
  const auto n = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for if (n > 128)
  for (std::ptrdiff_t i = 0; i < n; ++i) affine_row(x, w, bias, apply_tanh, static_cast<std::size_t>(i), out);
  return out;
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace semitrack::kernels
