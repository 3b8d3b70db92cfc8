// Copyright 2026 The hebbalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hebbalign {

// Dense row-major matrix of doubles. Column vectors are n x 1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  // Nested literal, e.g. Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);
  static Matrix row(std::span<const double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row_span(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator-(Matrix a);

// a += s * b
void axpy(double s, const Matrix& b, Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T without materializing the caller's transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);

// u v^T for column vectors u (n x 1) and v (m x 1).
Matrix outer(const Matrix& u, const Matrix& v);

// sum_ij a_ij b_ij == Tr[A B^T]
double frob_inner(const Matrix& a, const Matrix& b);
double frob_norm(const Matrix& a);
double trace(const Matrix& a);

// Column-wise mean over rows: (n x m) -> (1 x m).
Matrix row_mean(const Matrix& a);
// Adds the 1 x m row vector to every row of a.
void add_row_broadcast(Matrix& a, const Matrix& row);
// Column sums: (n x m) -> (1 x m).
Matrix column_sums(const Matrix& a);

// Rescales a in place so that frob_norm(a) <= max_norm. Returns true if clipped.
bool clip_frobenius(Matrix& a, double max_norm);

}  // namespace hebbalign
