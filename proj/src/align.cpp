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

#include "hebbalign/align.hpp"

#include <algorithm>
#include <cmath>

#include "hebbalign/error.hpp"

namespace hebbalign {

namespace {

constexpr MetricKind kAllMetrics[] = {
    MetricKind::grad_vs_hebb, MetricKind::full_update_vs_hebb, MetricKind::trace_alignment,
    MetricKind::weight_norm,  MetricKind::loss_train,          MetricKind::loss_val,
    MetricKind::accuracy,     MetricKind::rule_vs_hebb,        MetricKind::grad_hb_inner,
};

const Matrix& tap_of(const LayerTrace& trace, HebbTap tap) {
  return tap == HebbTap::preactivation ? trace.h_b : trace.post;
}

WindowStats stats_of(const double* begin, std::size_t n, std::size_t window) {
  WindowStats w;
  w.window = window;
  w.count = n;
  if (n == 0) return w;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += begin[i];
  w.mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = begin[i] - w.mean;
    sq += d * d;
  }
  w.std = std::sqrt(sq / static_cast<double>(n));
  return w;
}

}  // namespace

std::string_view to_string(MetricKind m) {
  switch (m) {
    case MetricKind::grad_vs_hebb: return "grad_vs_hebb";
    case MetricKind::full_update_vs_hebb: return "full_update_vs_hebb";
    case MetricKind::trace_alignment: return "trace_alignment";
    case MetricKind::weight_norm: return "weight_norm";
    case MetricKind::loss_train: return "loss_train";
    case MetricKind::loss_val: return "loss_val";
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::rule_vs_hebb: return "rule_vs_hebb";
    case MetricKind::grad_hb_inner: return "grad_hb_inner";
  }
  return "?";
}

MetricKind parse_metric_kind(std::string_view s) {
  for (MetricKind m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  throw DataError("unknown metric '" + std::string(s) + "'");
}

bool is_cosine_metric(MetricKind m) {
  return m == MetricKind::grad_vs_hebb || m == MetricKind::full_update_vs_hebb ||
         m == MetricKind::rule_vs_hebb;
}

Cosine cosine_checked(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("cosine_alignment: " + a.shape_string() + " vs " + b.shape_string());
  }
  const double na = frob_norm(a);
  const double nb = frob_norm(b);
  if (na < kZeroNorm || nb < kZeroNorm) return {0.0, true};
  const double c = frob_inner(a, b) / (na * nb);
  return {std::clamp(c, -1.0, 1.0), false};
}

double cosine_alignment(const Matrix& a, const Matrix& b) { return cosine_checked(a, b).value; }

Matrix hebbian_direction(const LayerTrace& trace, HebbTap tap) {
  Matrix h = matmul_tn(tap_of(trace, tap), trace.h_a);
  h *= 1.0 / static_cast<double>(trace.h_a.rows());
  return h;
}

double grad_hebb_alignment(const Matrix& loss_grad, const LayerTrace& trace, HebbTap tap) {
  return cosine_alignment(-loss_grad, hebbian_direction(trace, tap));
}

double full_update_alignment(const Matrix& delta, const LayerTrace& trace, HebbTap tap) {
  return cosine_alignment(delta, hebbian_direction(trace, tap));
}

std::vector<double> per_neuron_alignment(const Matrix& update, const Matrix& hebb) {
  if (!update.same_shape(hebb)) {
    throw ShapeError("per_neuron_alignment: " + update.shape_string() + " vs " +
                     hebb.shape_string());
  }
  std::vector<double> out(update.rows(), 0.0);
  for (std::size_t i = 0; i < update.rows(); ++i) {
    double dot = 0.0, nu = 0.0, nh = 0.0;
    const auto u = update.row_span(i);
    const auto h = hebb.row_span(i);
    for (std::size_t j = 0; j < u.size(); ++j) {
      dot += u[j] * h[j];
      nu += u[j] * u[j];
      nh += h[j] * h[j];
    }
    nu = std::sqrt(nu);
    nh = std::sqrt(nh);
    if (nu >= kZeroNorm && nh >= kZeroNorm) out[i] = std::clamp(dot / (nu * nh), -1.0, 1.0);
  }
  return out;
}

double trace_alignment(const Matrix& signal_mean, const Matrix& ha_hb) {
  if (signal_mean.rows() != ha_hb.cols() || signal_mean.cols() != ha_hb.rows()) {
    throw ShapeError("trace_alignment: signal " + signal_mean.shape_string() +
                     " needs a transposed partner, got " + ha_hb.shape_string());
  }
  // Tr[S M] = sum_ij S_ij M_ji
  double acc = 0.0;
  for (std::size_t i = 0; i < signal_mean.rows(); ++i) {
    for (std::size_t j = 0; j < signal_mean.cols(); ++j) acc += signal_mean(i, j) * ha_hb(j, i);
  }
  return acc;
}

Matrix ha_hb_mean(const LayerTrace& trace, HebbTap tap) {
  Matrix m = matmul_tn(trace.h_a, tap_of(trace, tap));
  m *= 1.0 / static_cast<double>(trace.h_a.rows());
  return m;
}

double grad_hb_inner(const Matrix& pre_activation_grad, const Matrix& h_b) {
  if (!pre_activation_grad.same_shape(h_b)) {
    throw ShapeError("grad_hb_inner: " + pre_activation_grad.shape_string() + " vs " +
                     h_b.shape_string());
  }
  return frob_inner(pre_activation_grad, h_b) / static_cast<double>(h_b.rows());
}

double stationarity_metric(const std::vector<Matrix>& deltas) {
  if (deltas.size() < 2) throw ParameterError("stationarity_metric: need at least 2 updates");
  StationarityAccumulator acc;
  for (const Matrix& d : deltas) acc.add(d);
  return acc.value();
}

void StationarityAccumulator::add(const Matrix& delta) {
  if (count_ == 0) {
    sum_ = delta;
  } else {
    if (!sum_.same_shape(delta)) {
      throw ShapeError("stationarity: " + delta.shape_string() + " vs " + sum_.shape_string());
    }
    sum_ += delta;
  }
  norm_sum_ += frob_norm(delta);
  ++count_;
}

double StationarityAccumulator::value() const {
  if (count_ == 0 || norm_sum_ < kZeroNorm) return 0.0;
  // The 1/n factors cancel.
  return frob_norm(sum_) / norm_sum_;
}

std::vector<WindowStats> sliding_stats(const std::vector<double>& series, std::size_t window) {
  if (window == 0) throw ParameterError("sliding_stats: window must be positive");
  std::vector<WindowStats> out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t n = std::min(window, i + 1);
    out.push_back(stats_of(series.data() + i + 1 - n, n, window));
  }
  return out;
}

WindowStats final_window(const std::vector<double>& series, std::size_t window) {
  if (window == 0) throw ParameterError("final_window: window must be positive");
  const std::size_t n = std::min(window, series.size());
  return stats_of(series.data() + series.size() - n, n, window);
}

SlidingWindow::SlidingWindow(std::size_t window) : window_(window) {
  if (window == 0) throw ParameterError("SlidingWindow: window must be positive");
}

WindowStats SlidingWindow::push(double x) {
  values_.push_back(x);
  if (values_.size() > window_) values_.pop_front();
  return current();
}

WindowStats SlidingWindow::current() const {
  const std::vector<double> v(values_.begin(), values_.end());
  return stats_of(v.data(), v.size(), window_);
}

NormSpread representation_norm_spread(const Matrix& h_a) {
  std::vector<double> norms(h_a.rows());
  for (std::size_t i = 0; i < h_a.rows(); ++i) {
    double s = 0.0;
    for (double v : h_a.row_span(i)) s += v * v;
    norms[i] = std::sqrt(s);
  }
  const WindowStats w = stats_of(norms.data(), norms.size(), norms.size());
  return {w.mean, w.std};
}

}  // namespace hebbalign
