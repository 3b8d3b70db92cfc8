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
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hebbalign/nn.hpp"
#include "hebbalign/rules.hpp"
#include "hebbalign/tensor.hpp"

namespace hebbalign {

// rule_vs_hebb: cosine of the rule's own ascent signal with the Hebbian direction.
// grad_hb_inner: batch mean of dL/dh_b . h_b.
enum class MetricKind {
  grad_vs_hebb,
  full_update_vs_hebb,
  trace_alignment,
  weight_norm,
  loss_train,
  loss_val,
  accuracy,
  rule_vs_hebb,
  grad_hb_inner,
};

std::string_view to_string(MetricKind m);
MetricKind parse_metric_kind(std::string_view s);
bool is_cosine_metric(MetricKind m);

struct AlignmentRecord {
  std::string run_id;
  std::int64_t step = 0;
  int layer = 0;  // 1-based; 0 for whole-model metrics
  MetricKind metric = MetricKind::grad_vs_hebb;
  double value = 0.0;
  std::optional<std::vector<double>> per_neuron;
  bool degenerate = false;  // a cosine argument had (near) zero norm
};

struct WindowStats {
  std::size_t window = 200;
  std::size_t count = 0;  // min(window, samples so far)
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct Cosine {
  double value = 0.0;
  bool degenerate = false;
};

inline constexpr double kZeroNorm = 1e-30;

// Frobenius cosine. Zero when either norm is below kZeroNorm.
double cosine_alignment(const Matrix& a, const Matrix& b);
Cosine cosine_checked(const Matrix& a, const Matrix& b);

// Batch-mean tap h_a^T with a positive sign, tap per HebbTap.
Matrix hebbian_direction(const LayerTrace& trace, HebbTap tap);

// cos(-dL/dW, hebbian direction). The decay term is not part of loss_grad.
double grad_hebb_alignment(const Matrix& loss_grad, const LayerTrace& trace, HebbTap tap);

// cos(realized dW, hebbian direction); dW includes decay but not noise.
double full_update_alignment(const Matrix& delta, const LayerTrace& trace, HebbTap tap);

// Row-wise cosine; rows with zero norm give 0.
std::vector<double> per_neuron_alignment(const Matrix& update, const Matrix& hebb);

// Tr[signal_mean * ha_hb_mean] with signal_mean (out x in) and ha_hb_mean
// the mean of h_a h_b^T (in x out).
double trace_alignment(const Matrix& signal_mean, const Matrix& ha_hb_mean);

// Batch mean of h_a h_b^T for one trace (in x out).
Matrix ha_hb_mean(const LayerTrace& trace, HebbTap tap);

// Batch mean of sum_i dL/dh_b_i * h_b_i.
double grad_hb_inner(const Matrix& pre_activation_grad, const Matrix& h_b);

// |mean dW| / mean |dW| over the given updates. Needs at least two.
double stationarity_metric(const std::vector<Matrix>& deltas);

// Same quantity accumulated without storing the updates.
class StationarityAccumulator {
 public:
  void add(const Matrix& delta);
  std::size_t count() const { return count_; }
  double value() const;

 private:
  Matrix sum_;
  double norm_sum_ = 0.0;
  std::size_t count_ = 0;
};

// One WindowStats per input element, each over the trailing
// min(window, i + 1) values.
std::vector<WindowStats> sliding_stats(const std::vector<double>& series, std::size_t window = 200);

// Stats of the final min(window, n) values.
WindowStats final_window(const std::vector<double>& series, std::size_t window = 200);

// Streaming version of sliding_stats; each push returns the current window.
class SlidingWindow {
 public:
  explicit SlidingWindow(std::size_t window = 200);
  WindowStats push(double x);
  WindowStats current() const;

 private:
  std::size_t window_;
  std::deque<double> values_;
};

// Mean and population std of per-sample L2 norms of h_a.
struct NormSpread {
  double mean = 0.0;
  double std = 0.0;
};
NormSpread representation_norm_spread(const Matrix& h_a);

}  // namespace hebbalign
