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

#include <cstdint>
#include <optional>
#include <vector>

#include "hebbalign/rng.hpp"

namespace hebbalign {

// Scalar-output linear regression l(w) = (w^T x - y)^2 evaluated at
// w = v + eps, eps ~ N(0, sigma^2 I).
struct LinRegProblem {
  std::vector<double> v;
  std::vector<double> x;
  double y = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;

  void validate() const;
};

// E_eps[(dW_sgd)^T (dW_hebb)] with dW_sgd = -x(w^T x - y) - gamma w and
// dW_hebb = x w^T x. Using E[w^T x] = v^T x and
// E[(w^T x)^2] = (v^T x)^2 + sigma^2 |x|^2:
//   -|x|^2 [(v^T x)^2 + sigma^2 |x|^2 - y v^T x] - gamma [(v^T x)^2 + sigma^2 |x|^2]
double closed_form_alignment(const LinRegProblem& p);

struct MonteCarloResult {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations
  double std_error() const;
};

MonteCarloResult monte_carlo_alignment(const LinRegProblem& p, std::uint64_t n_samples, Rng& rng);

// Pooled statistics of two independent shards.
MonteCarloResult merge(const MonteCarloResult& a, const MonteCarloResult& b);

// Runs `shards` independent streams derived from `seed` on separate threads.
MonteCarloResult monte_carlo_alignment_parallel(const LinRegProblem& p, std::uint64_t n_samples,
                                                std::uint64_t seed, unsigned shards);

struct PhasePoint {
  double sigma = 0.0;
  double gamma = 0.0;
  double alignment = 0.0;
  double alignment_std = 0.0;
  double val_loss = 0.0;
};

struct PhaseGrid {
  std::vector<PhasePoint> points;
};

struct BoundaryCrossing {
  double sigma = 0.0;
  double gamma = 0.0;
};

struct BoundaryFit {
  double exponent = 0.0;
  double coefficient = 0.0;
  double residual = 0.0;  // RMS residual of the fit in log gamma
  std::vector<BoundaryCrossing> crossings;
  std::vector<double> columns_without_crossing;
};

// Per sigma column (sigma > 0), the smallest-gamma zero crossing of the
// alignment, linearly interpolated in gamma. Then least squares on
// log gamma* = p log sigma + log c. Throws BoundaryNotFound when fewer than
// three columns cross.
BoundaryFit phase_boundary_fit(const PhaseGrid& grid);

// Zero crossing of a single column, sorted by gamma internally.
std::optional<double> column_crossing(std::vector<PhasePoint> column);

}  // namespace hebbalign
