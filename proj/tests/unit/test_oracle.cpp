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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hebbalign/error.hpp"
#include "hebbalign/oracle.hpp"

using namespace hebbalign;

namespace {

LinRegProblem random_problem(Rng& rng, std::size_t d, double sigma, double gamma) {
  LinRegProblem p;
  for (std::size_t i = 0; i < d; ++i) {
    p.v.push_back(rng.normal());
    p.x.push_back(rng.normal());
  }
  p.y = 2.0 * rng.normal();
  p.sigma = sigma;
  p.gamma = gamma;
  return p;
}

PhaseGrid synthetic(double (*f)(double sigma, double gamma)) {
  PhaseGrid g;
  for (double sigma : {0.0, 0.1, 0.2, 0.4, 0.8, 1.6}) {
    for (int k = 0; k <= 60; ++k) {
      const double gamma = 1e-4 * std::pow(10.0, k / 10.0);  // 1e-4 .. 1e2
      g.points.push_back({sigma, gamma, f(sigma, gamma), 0.0, 0.0});
    }
  }
  return g;
}

}  // namespace

TEST_CASE("closed_form_alignment examples") {
  LinRegProblem p{{1, 0}, {1, 0}, 2.0, 0.0, 0.0};
  CHECK(closed_form_alignment(p) == 1.0);
  p.sigma = std::sqrt(2.0);
  CHECK(closed_form_alignment(p) == doctest::Approx(-1.0).epsilon(1e-14));
  p.x = {0, 0};
  CHECK(closed_form_alignment(p) == 0.0);

  // gamma only subtracts gamma E[(w^T x)^2].
  LinRegProblem q{{1, 0}, {1, 0}, 2.0, 0.0, 0.5};
  CHECK(closed_form_alignment(q) == doctest::Approx(1.0 - 0.5));

  CHECK_THROWS_AS(closed_form_alignment(LinRegProblem{{1}, {1, 2}, 0, 0, 0}), ShapeError);
}

TEST_CASE("property: closed form decreases in sigma^2 at gamma = 0") {
  Rng rng(40);
  for (int trial = 0; trial < 100; ++trial) {
    LinRegProblem p = random_problem(rng, 1 + rng.uniform_index(6), 0.0, 0.0);
    double prev = closed_form_alignment(p);
    for (double s : {0.1, 0.3, 0.7, 1.5, 3.0}) {
      p.sigma = s;
      const double now = closed_form_alignment(p);
      CHECK(now <= prev);
      prev = now;
    }
  }
}

TEST_CASE("monte carlo: sigma zero equals the closed form") {
  Rng rng(41);
  const LinRegProblem p = random_problem(rng, 4, 0.0, 0.3);
  const MonteCarloResult r = monte_carlo_alignment(p, 100, rng);
  CHECK(r.mean == doctest::Approx(closed_form_alignment(p)).epsilon(1e-12));
  CHECK(r.std_error() == 0.0);
}

TEST_CASE("monte carlo agrees with the closed form within 4 standard errors") {
  Rng rng(42);
  for (double gamma : {0.0, 0.7}) {
    const LinRegProblem p = random_problem(rng, 5, 0.6, gamma);
    const MonteCarloResult r = monte_carlo_alignment_parallel(p, 1'000'000, 4242, 4);
    CHECK(r.n == 1'000'000);
    CHECK(std::abs(r.mean - closed_form_alignment(p)) < 4.0 * r.std_error());
  }
}

TEST_CASE("monte carlo standard error scales as 1/sqrt(n)") {
  Rng rng(43);
  const LinRegProblem p = random_problem(rng, 3, 0.5, 0.1);
  Rng a(1), b(2);
  const double se1 = monte_carlo_alignment(p, 20000, a).std_error();
  const double se4 = monte_carlo_alignment(p, 80000, b).std_error();
  CHECK(se1 / se4 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("merge pools shards exactly") {
  Rng rng(44);
  const LinRegProblem p = random_problem(rng, 3, 0.5, 0.1);
  Rng r1(5);
  const MonteCarloResult whole = monte_carlo_alignment(p, 3000, r1);
  Rng r2(5);
  const MonteCarloResult first = monte_carlo_alignment(p, 1000, r2);
  const MonteCarloResult second = monte_carlo_alignment(p, 2000, r2);
  const MonteCarloResult pooled = merge(first, second);
  CHECK(pooled.n == 3000);
  CHECK(pooled.mean == doctest::Approx(whole.mean).epsilon(1e-12));
  CHECK(pooled.std_error() == doctest::Approx(whole.std_error()).epsilon(1e-10));
}

TEST_CASE("phase_boundary_fit recovers constructed boundaries") {
  const BoundaryFit quad = phase_boundary_fit(synthetic([](double s, double g) { return g - s * s; }));
  CHECK(std::abs(quad.exponent - 2.0) < 1e-6);
  CHECK(std::abs(quad.coefficient - 1.0) < 1e-6);
  CHECK(quad.residual < 1e-6);
  CHECK(quad.crossings.size() == 5);  // sigma = 0 is excluded

  const BoundaryFit lin = phase_boundary_fit(synthetic([](double s, double g) { return g - 3 * s; }));
  CHECK(std::abs(lin.exponent - 1.0) < 1e-6);
  CHECK(std::abs(lin.coefficient - 3.0) < 1e-6);
}

TEST_CASE("phase_boundary_fit ignores row order") {
  PhaseGrid g = synthetic([](double s, double gm) { return std::tanh(gm - 0.5 * s * s); });
  const BoundaryFit a = phase_boundary_fit(g);
  Rng rng(45);
  for (std::size_t i = g.points.size() - 1; i > 0; --i) {
    std::swap(g.points[i], g.points[rng.uniform_index(i + 1)]);
  }
  const BoundaryFit b = phase_boundary_fit(g);
  CHECK(a.exponent == b.exponent);
  CHECK(a.coefficient == b.coefficient);
  CHECK(a.residual == b.residual);
}

TEST_CASE("phase_boundary_fit uses the smallest-gamma crossing") {
  std::vector<PhasePoint> col = {{1, 1, -1}, {1, 2, 1}, {1, 3, -1}, {1, 4, 1}};
  CHECK(*column_crossing(col) == 1.5);
  std::reverse(col.begin(), col.end());
  CHECK(*column_crossing(col) == 1.5);
  CHECK(*column_crossing({{1, 1, -1}, {1, 2, 0}, {1, 3, 1}}) == 2.0);
  CHECK_FALSE(column_crossing({{1, 1, 1}, {1, 2, 1}}).has_value());
}

TEST_CASE("phase_boundary_fit reports the columns without a crossing") {
  PhaseGrid g = synthetic([](double, double) { return 1.0; });
  try {
    phase_boundary_fit(g);
    FAIL("expected BoundaryNotFound");
  } catch (const BoundaryNotFound& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0.1") != std::string::npos);
    CHECK(msg.find("1.6") != std::string::npos);
  }
}
