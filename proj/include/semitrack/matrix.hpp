#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace semitrack {

/// Dense row-major matrix of doubles. Sizes in this project are small
/// (instances x instances, cells x channels), so no expression templates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v);
  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_at(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> v);

}  // namespace semitrack
