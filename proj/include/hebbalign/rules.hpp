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
#include <string_view>
#include <vector>

#include "hebbalign/nn.hpp"
#include "hebbalign/rng.hpp"
#include "hebbalign/tensor.hpp"

namespace hebbalign {

enum class RuleKind { sgd, adam, dfa, hebbian, oja, randomnn };
enum class DecayKind { l2, l1, none };
enum class HebbTap { preactivation, postactivation };
enum class HebbNormalization { none, weight_standardize, oja };
enum class NoiseMode { persistent, transient };

std::string_view to_string(RuleKind v);
std::string_view to_string(DecayKind v);
std::string_view to_string(HebbTap v);
std::string_view to_string(HebbNormalization v);
std::string_view to_string(NoiseMode v);
RuleKind parse_rule_kind(std::string_view s);
DecayKind parse_decay_kind(std::string_view s);
HebbTap parse_hebb_tap(std::string_view s);
HebbNormalization parse_hebb_normalization(std::string_view s);
NoiseMode parse_noise_mode(std::string_view s);

// Frozen random network whose batch-averaged output, pushed through a fixed
// per-parameter projection, gives each parameter a target direction W*.
struct RandomNnConfig {
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::size_t out_dim = 4;
  double target_norm = 100.0;
  double clip = 1.0;
  double epsilon = 1e-8;
  double projection_std = 1.0;
};

struct RuleConfig {
  RuleKind kind = RuleKind::sgd;
  double eta = 0.01;
  double weight_decay = 0.0;
  DecayKind decay_kind = DecayKind::l2;
  int hebb_sign = 1;
  HebbNormalization hebb_normalization = HebbNormalization::none;
  HebbTap hebb_tap = HebbTap::preactivation;
  std::optional<double> grad_clip;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  RandomNnConfig randomnn;

  void validate() const;
};

struct NoiseConfig {
  double sigma = 0.0;
  NoiseMode mode = NoiseMode::persistent;

  void validate() const;
};

struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
};

// Batch mean of s * tap h_a^T, tap = h_b or activation(h_b). No decay term.
Matrix hebbian_signal(const LayerTrace& trace, const RuleConfig& cfg);

// Batch mean of y x^T - diag(y*y) W, with y per hebb_tap and x = h_a.
Matrix oja_signal(const LayerTrace& trace, const Matrix& weight, const RuleConfig& cfg);

// Each row shifted to zero mean and scaled to unit L2 norm. Constant rows
// become zero rows.
Matrix weight_standardize(const Matrix& weight);

// One fixed random matrix per hidden layer, shaped (output_dim x fan_out).
struct DfaFeedback {
  std::vector<Matrix> matrices;
};

DfaFeedback make_dfa_feedback(const MlpSpec& spec, Rng& rng);

// Descent-direction pseudo-gradient. Hidden layer i gets the pre-activation
// error (e B_i) * act'(h_b_i); the output layer gets the true error. Each
// parameter's signal is Frobenius-clipped to cfg.grad_clip when set.
Gradients dfa_signal(const Params& params, const ForwardPass& pass, const Matrix& output_error,
                     const DfaFeedback& feedback, const RuleConfig& cfg);

struct RandomNnNet {
  MlpSpec spec;
  Params params;
  std::vector<Matrix> projections;  // one (numel x out_dim) per student parameter
};

RandomNnNet make_randomnn(const RandomNnConfig& cfg, std::size_t input_dim,
                          const Params& student, Rng& rng);

// Mean frozen-net output over the batch (1 x out_dim).
Matrix randomnn_direction(const RandomNnNet& net, const Matrix& batch_inputs);

// p(W*) s_dir(W) s_red(W, W*) W*, then Frobenius-clipped at cfg.clip.
// sign(0) is taken as +1.
Matrix randomnn_signal(const Matrix& weight, const Matrix& projection, const Matrix& direction,
                       const RandomNnConfig& cfg);
Matrix randomnn_signal(const Matrix& batch_inputs, const Matrix& weight, std::size_t param_index,
                       const RandomNnConfig& cfg, const RandomNnNet& net);

struct NoiseInjection {
  Params evaluated;               // v + eps; forward/backward run here
  std::optional<Params> restore;  // transient mode: v, which receives the update
};

NoiseInjection inject_noise(const Params& params, const NoiseConfig& noise, Rng& rng);

// Applies one step in place and returns the realized change per parameter.
//   sgd/dfa:            W <- W - eta (signal + gamma D(W))
//   hebbian/oja/random: W <- W + eta (signal - gamma D(W))
//   adam:               moments on signal + gamma D(W) (coupled L2)
// D(W) = W for l2, sign(W) for l1 (truncated so a step never crosses zero),
// 0 for none. Hebbian with weight_standardize re-standardizes weight matrices
// after the step. Throws NumericError, leaving params untouched, if any new
// value is non-finite.
std::vector<Matrix> apply_update(Params& params, const Gradients& signal, const RuleConfig& cfg,
                                 OptimizerState& state);

// Per-run rule instance: owns optimizer state, DFA feedback and the RandomNN
// net. Not shareable between runs.
class LearningRule {
 public:
  LearningRule(RuleConfig cfg, const ModelSpec& model, std::size_t raw_input_dim,
               const Params& initial, Rng& rng);

  struct Signals {
    Gradients native;  // what apply_update consumes
    Gradients ascent;  // g in dW = g - gamma W, for instrumentation
  };

  Signals compute(const Params& params, const ForwardPass& pass, const Backward& grads,
                  const Matrix& output_error, const Matrix& raw_inputs) const;

  std::vector<Matrix> apply(Params& params, const Gradients& native);

  const RuleConfig& config() const { return cfg_; }
  const OptimizerState& state() const { return state_; }

 private:
  RuleConfig cfg_;
  ModelSpec model_;
  OptimizerState state_;
  std::optional<DfaFeedback> feedback_;
  std::optional<RandomNnNet> random_net_;
};

}  // namespace hebbalign
