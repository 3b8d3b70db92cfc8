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

#include "hebbalign/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "hebbalign/error.hpp"

namespace hebbalign {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void LinRegProblem::validate() const {
  if (v.size() != x.size()) {
    throw ShapeError("LinRegProblem: v has " + std::to_string(v.size()) + " entries, x has " +
                     std::to_string(x.size()));
  }
  if (!(sigma >= 0.0)) throw ParameterError("LinRegProblem: sigma must be >= 0");
}

double closed_form_alignment(const LinRegProblem& p) {
  p.validate();
  const double xx = dot(p.x, p.x);
  const double vx = dot(p.v, p.x);
  const double second_moment = vx * vx + p.sigma * p.sigma * xx;  // E[(w^T x)^2]
  return -xx * (second_moment - p.y * vx) - p.gamma * second_moment;
}

double MonteCarloResult::std_error() const {
  if (n < 2) return 0.0;
  const double var = m2 / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

MonteCarloResult monte_carlo_alignment(const LinRegProblem& p, std::uint64_t n_samples, Rng& rng) {
  p.validate();
  if (n_samples < 2) throw ParameterError("monte_carlo_alignment: need at least 2 samples");
  const std::size_t d = p.v.size();
  std::vector<double> w(d);
  MonteCarloResult r;
  for (std::uint64_t k = 0; k < n_samples; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      w[i] = p.sigma == 0.0 ? p.v[i] : p.v[i] + p.sigma * rng.normal();
    }
    const double wx = dot(w, p.x);
    // dW_sgd . dW_hebb with dW_sgd = -x (wx - y) - gamma w, dW_hebb = x wx
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      s += (-p.x[i] * (wx - p.y) - p.gamma * w[i]) * (p.x[i] * wx);
    }
    // Welford
    ++r.n;
    const double delta = s - r.mean;
    r.mean += delta / static_cast<double>(r.n);
    r.m2 += delta * (s - r.mean);
  }
  return r;
}

MonteCarloResult merge(const MonteCarloResult& a, const MonteCarloResult& b) {
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  MonteCarloResult r;
  r.n = a.n + b.n;
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
  const double delta = b.mean - a.mean;
  r.mean = a.mean + delta * nb / (na + nb);
  r.m2 = a.m2 + b.m2 + delta * delta * na * nb / (na + nb);
  return r;
}

MonteCarloResult monte_carlo_alignment_parallel(const LinRegProblem& p, std::uint64_t n_samples,
                                                std::uint64_t seed, unsigned shards) {
  shards = std::max(1u, shards);
  if (n_samples < 2 * static_cast<std::uint64_t>(shards)) shards = 1;
  std::vector<MonteCarloResult> parts(shards);
  std::vector<std::thread> threads;
  for (unsigned s = 0; s < shards; ++s) {
    const std::uint64_t n = n_samples / shards + (s < n_samples % shards ? 1 : 0);
    threads.emplace_back([&, s, n] {
      Rng rng(derive_seed(seed, s));
      parts[s] = monte_carlo_alignment(p, n, rng);
    });
  }
  for (auto& t : threads) t.join();
  MonteCarloResult total;
  for (const auto& part : parts) total = merge(total, part);
  return total;
}

std::optional<double> column_crossing(std::vector<PhasePoint> column) {
  std::sort(column.begin(), column.end(),
            [](const PhasePoint& a, const PhasePoint& b) { return a.gamma < b.gamma; });
  for (std::size_t i = 0; i < column.size(); ++i) {
    const PhasePoint& a = column[i];
    if (a.alignment == 0.0) return a.gamma;
    if (i + 1 == column.size()) break;
    const PhasePoint& b = column[i + 1];
    if ((a.alignment < 0.0) != (b.alignment < 0.0) && b.alignment != 0.0) {
      const double t = a.alignment / (a.alignment - b.alignment);
      return a.gamma + t * (b.gamma - a.gamma);
    }
  }
  return std::nullopt;
}

BoundaryFit phase_boundary_fit(const PhaseGrid& grid) {
  std::map<double, std::vector<PhasePoint>> columns;
  for (const PhasePoint& pt : grid.points) {
    if (pt.sigma > 0.0) columns[pt.sigma].push_back(pt);
  }
  BoundaryFit fit;
  for (auto& [sigma, column] : columns) {
    const auto g = column_crossing(std::move(column));
    if (g && *g > 0.0) {
      fit.crossings.push_back({sigma, *g});
    } else {
      fit.columns_without_crossing.push_back(sigma);
    }
  }
  if (fit.crossings.size() < 3) {
    std::ostringstream msg;
    msg << "phase boundary needs a positive-gamma zero crossing in at least 3 sigma columns; found "
        << fit.crossings.size() << " of " << columns.size() << ". Columns without a crossing:";
    for (double s : fit.columns_without_crossing) msg << ' ' << s;
    throw BoundaryNotFound(msg.str());
  }

  // Ordinary least squares on (log sigma, log gamma*).
  const double n = static_cast<double>(fit.crossings.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& c : fit.crossings) {
    sx += std::log(c.sigma);
    sy += std::log(c.gamma);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& c : fit.crossings) {
    const double dx = std::log(c.sigma) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(c.gamma) - my);
  }
  if (sxx == 0.0) throw BoundaryNotFound("phase boundary: sigma columns are not distinct");
  fit.exponent = sxy / sxx;
  const double intercept = my - fit.exponent * mx;
  fit.coefficient = std::exp(intercept);
  double rss = 0.0;
  for (const auto& c : fit.crossings) {
    const double r = std::log(c.gamma) - (intercept + fit.exponent * std::log(c.sigma));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

}  // namespace hebbalign
