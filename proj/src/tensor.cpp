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

#include "hebbalign/tensor.hpp"

#include <cmath>
#include <numeric>

#include "hebbalign/error.hpp"

namespace hebbalign {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(values_.size()) +
                     " values do not fill shape (" + std::to_string(rows) + "x" +
                     std::to_string(cols) + ")");
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ShapeError("Matrix::from_rows: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Matrix(n, m, std::move(values));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

bool Matrix::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }
Matrix operator-(Matrix a) { return a *= -1.0; }

void axpy(double s, const Matrix& b, Matrix& a) {
  require_same_shape(a, b, "axpy");
  double* out = a.data();
  const double* in = b.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) out[i] += s * in[i];
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_string() + " x " +
                     b.shape_string());
  }
  const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* br = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ " + a.shape_string() + " x " +
                     b.shape_string() + "^T");
  }
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dimensions differ " + a.shape_string() + "^T x " +
                     b.shape_string());
  }
  const std::size_t k_dim = a.rows(), n = a.cols(), m = b.cols();
  Matrix out(n, m);
  for (std::size_t k = 0; k < k_dim; ++k) {
    const double* ar = a.data() + k * n;
    const double* br = b.data() + k * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      double* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  double* o = out.data();
  const double* in = b.data();
  for (std::size_t i = 0, n = out.size(); i < n; ++i) o[i] *= in[i];
  return out;
}

Matrix outer(const Matrix& u, const Matrix& v) {
  if (u.cols() != 1 || v.cols() != 1) {
    throw ShapeError("outer: expected column vectors, got " + u.shape_string() + " and " +
                     v.shape_string());
  }
  Matrix out(u.rows(), v.rows());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < v.rows(); ++j) out(i, j) = u(i, 0) * v(j, 0);
  }
  return out;
}

double frob_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frob_inner");
  const double* x = a.data();
  const double* y = b.data();
  double sum = 0.0;
  for (std::size_t i = 0, n = a.size(); i < n; ++i) sum += x[i] * y[i];
  return sum;
}

double frob_norm(const Matrix& a) {
  double sum = 0.0;
  for (double v : a.values()) sum += v * v;
  return std::sqrt(sum);
}

double trace(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("trace: non-square " + a.shape_string());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) sum += a(i, i);
  return sum;
}

Matrix row_mean(const Matrix& a) {
  Matrix out = column_sums(a);
  if (a.rows() > 0) out *= 1.0 / static_cast<double>(a.rows());
  return out;
}

void add_row_broadcast(Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row_broadcast: row " + row.shape_string() + " does not fit " +
                     a.shape_string());
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* r = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += row(0, j);
  }
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* r = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += r[j];
  }
  return out;
}

bool clip_frobenius(Matrix& a, double max_norm) {
  const double norm = frob_norm(a);
  if (norm <= max_norm || norm == 0.0) return false;
  a *= max_norm / norm;
  return true;
}

}  // namespace hebbalign
