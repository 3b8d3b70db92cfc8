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

#include <cmath>

#include "doctest.h"
#include "hebbalign/error.hpp"
#include "hebbalign/rng.hpp"
#include "hebbalign/tensor.hpp"
#include "test_support.hpp"

using namespace hebbalign;
using hebbalign::testing::max_abs_diff;
using hebbalign::testing::naive_matmul;
using hebbalign::testing::random_matrix;

TEST_CASE("matmul small cases") {
  const Matrix id = Matrix::identity(2);
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  CHECK(matmul(id, b) == b);
  CHECK(matmul(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3}, {4}})) ==
        Matrix::from_rows({{11}}));
}

TEST_CASE("matmul agrees with triple loop") {
  Rng rng(11);
  const Matrix a = random_matrix(rng, 3, 4);
  const Matrix b = random_matrix(rng, 4, 2);
  CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
  CHECK(max_abs_diff(matmul_nt(a, transpose(b)), naive_matmul(a, b)) < 1e-12);
  CHECK(max_abs_diff(matmul_tn(transpose(a), b), naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
  const Matrix a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2x3)") != std::string::npos);
  }
}

TEST_CASE("outer product") {
  CHECK(outer(Matrix::column(std::vector<double>{3}), Matrix::column(std::vector<double>{1, 2})) ==
        Matrix::from_rows({{3, 6}}));
  CHECK(outer(Matrix(2, 1), Matrix(2, 1, 1.0)) == Matrix(2, 2));
  CHECK(outer(Matrix::column(std::vector<double>{1, 2}),
              Matrix::column(std::vector<double>{3, 4})) == Matrix::from_rows({{3, 4}, {6, 8}}));
  CHECK_THROWS_AS(outer(Matrix(2, 2), Matrix(2, 1)), ShapeError);
}

TEST_CASE("frobenius inner product and norm") {
  const Matrix ones(2, 2, 1.0);
  CHECK(frob_inner(ones, ones) == 4.0);
  CHECK(frob_inner(Matrix::from_rows({{1, 0}, {0, 0}}), Matrix::from_rows({{0, 0}, {0, 1}})) ==
        0.0);
  CHECK(frob_norm(Matrix::from_rows({{3, 4}})) == 5.0);
  CHECK(frob_norm(Matrix(3, 3)) == 0.0);
  CHECK_THROWS_AS(frob_inner(Matrix(2, 2), Matrix(2, 3)), ShapeError);

  Rng rng(5);
  const Matrix a = random_matrix(rng, 4, 3);
  const Matrix b = random_matrix(rng, 4, 3);
  CHECK(std::abs(frob_inner(a, b) - trace(matmul(a, transpose(b)))) < 1e-12);
  const double n = frob_norm(a);
  CHECK(std::abs(n * n - frob_inner(a, a)) < 1e-12);
}

TEST_CASE("gaussian_sample contract") {
  Rng rng(1);
  CHECK(gaussian_sample(rng, 2, 2, 0.0, 0.0) == Matrix(2, 2));
  CHECK_THROWS_AS(gaussian_sample(rng, 2, 2, 0.0, -1.0), ParameterError);

  Rng a(42), b(42);
  CHECK(gaussian_sample(a, 5, 7, 0.3, 2.0) == gaussian_sample(b, 5, 7, 0.3, 2.0));

  Rng big(2024);
  const Matrix s = gaussian_sample(big, 100000, 1, 0.0, 1.0);
  double mean = 0.0;
  for (double v : s.values()) mean += v;
  mean /= 1e5;
  double var = 0.0;
  for (double v : s.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (1e5 - 1));
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sd - 1.0) < 0.02);
}

TEST_CASE("uniform_index is in range and deterministic") {
  Rng a(9), b(9);
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.uniform_index(7);
    CHECK(x < 7);
    CHECK(x == b.uniform_index(7));
  }
}

TEST_CASE("property: matmul associativity") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6), k = 1 + rng.uniform_index(6),
                      m = 1 + rng.uniform_index(6), p = 1 + rng.uniform_index(6);
    const Matrix a = random_matrix(rng, n, k), b = random_matrix(rng, k, m),
                 c = random_matrix(rng, m, p);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    CHECK(max_abs_diff(left, right) <= 1e-10 * std::max(1.0, frob_norm(left)));
  }
}

TEST_CASE("property: frob_inner symmetry, bilinearity, Cauchy-Schwarz") {
  Rng rng(78);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(5), m = 1 + rng.uniform_index(5);
    const Matrix a = random_matrix(rng, n, m), b = random_matrix(rng, n, m),
                 c = random_matrix(rng, n, m);
    const double s = rng.uniform(-3, 3);
    CHECK(std::abs(frob_inner(a, b) - frob_inner(b, a)) < 1e-12);
    CHECK(std::abs(frob_inner(a * s + c, b) - (s * frob_inner(a, b) + frob_inner(c, b))) < 1e-12);
    CHECK(std::abs(frob_inner(a, b)) <= frob_norm(a) * frob_norm(b) + 1e-12);
  }
}

TEST_CASE("property: RNG replay reproduces every sample") {
  for (std::uint64_t seed : {0ULL, 1ULL, 123456789ULL}) {
    Rng a(seed), b(seed);
    for (int i = 0; i < 1000; ++i) {
      CHECK(a.normal() == b.normal());
      CHECK(a.uniform() == b.uniform());
    }
  }
}

TEST_CASE("clip_frobenius") {
  Matrix m = Matrix::from_rows({{3, 4}});
  CHECK(clip_frobenius(m, 1.0));
  CHECK(frob_norm(m) <= 1.0 + 1e-12);
  Matrix small = Matrix::from_rows({{0.1, 0.1}});
  CHECK_FALSE(clip_frobenius(small, 1.0));
}
