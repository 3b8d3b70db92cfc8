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

#include "hebbalign/rules.hpp"

#include <algorithm>
#include <cmath>

#include "hebbalign/error.hpp"

namespace hebbalign {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const E (&all)[N], const char* what) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

double sign_or_plus(double x) { return x < 0.0 ? -1.0 : 1.0; }

bool is_traced_weight(const ParamEntry& e) {
  return e.layer > 0 && e.role != ParamRole::bias;
}

Matrix tap_of(const LayerTrace& trace, HebbTap tap) {
  return tap == HebbTap::preactivation ? trace.h_b : trace.post;
}

void maybe_clip(Matrix& m, const std::optional<double>& clip) {
  if (clip) clip_frobenius(m, *clip);
}

}  // namespace

std::string_view to_string(RuleKind v) {
  switch (v) {
    case RuleKind::sgd: return "sgd";
    case RuleKind::adam: return "adam";
    case RuleKind::dfa: return "dfa";
    case RuleKind::hebbian: return "hebbian";
    case RuleKind::oja: return "oja";
    case RuleKind::randomnn: return "randomnn";
  }
  return "?";
}

std::string_view to_string(DecayKind v) {
  switch (v) {
    case DecayKind::l2: return "l2";
    case DecayKind::l1: return "l1";
    case DecayKind::none: return "none";
  }
  return "?";
}

std::string_view to_string(HebbTap v) {
  return v == HebbTap::preactivation ? "preactivation" : "postactivation";
}

std::string_view to_string(HebbNormalization v) {
  switch (v) {
    case HebbNormalization::none: return "none";
    case HebbNormalization::weight_standardize: return "weight_standardize";
    case HebbNormalization::oja: return "oja";
  }
  return "?";
}

std::string_view to_string(NoiseMode v) {
  return v == NoiseMode::persistent ? "persistent" : "transient";
}

RuleKind parse_rule_kind(std::string_view s) {
  static constexpr RuleKind all[] = {RuleKind::sgd,     RuleKind::adam, RuleKind::dfa,
                                     RuleKind::hebbian, RuleKind::oja,  RuleKind::randomnn};
  return parse_enum(s, all, "rule kind");
}

DecayKind parse_decay_kind(std::string_view s) {
  static constexpr DecayKind all[] = {DecayKind::l2, DecayKind::l1, DecayKind::none};
  return parse_enum(s, all, "decay kind");
}

HebbTap parse_hebb_tap(std::string_view s) {
  static constexpr HebbTap all[] = {HebbTap::preactivation, HebbTap::postactivation};
  return parse_enum(s, all, "hebbian tap");
}

HebbNormalization parse_hebb_normalization(std::string_view s) {
  static constexpr HebbNormalization all[] = {
      HebbNormalization::none, HebbNormalization::weight_standardize, HebbNormalization::oja};
  return parse_enum(s, all, "hebbian normalization");
}

NoiseMode parse_noise_mode(std::string_view s) {
  static constexpr NoiseMode all[] = {NoiseMode::persistent, NoiseMode::transient};
  return parse_enum(s, all, "noise mode");
}

void RuleConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("rule.eta must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("rule.weight_decay must be >= 0");
  if (hebb_sign != 1 && hebb_sign != -1) throw ConfigError("rule.hebb_sign must be +1 or -1");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("rule.grad_clip must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("rule.adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("rule.adam_eps must be > 0");
  if (randomnn.hidden.empty() || randomnn.out_dim == 0) {
    throw ConfigError("rule.randomnn needs hidden layers and a positive out_dim");
  }
  if (!(randomnn.clip > 0.0) || !(randomnn.target_norm > 0.0) || !(randomnn.epsilon >= 0.0)) {
    throw ConfigError("rule.randomnn clip/target_norm must be > 0 and epsilon >= 0");
  }
}

void NoiseConfig::validate() const {
  if (!(sigma >= 0.0)) throw ConfigError("noise.sigma must be >= 0");
}

// ---------------------------------------------------------------------------

Matrix hebbian_signal(const LayerTrace& trace, const RuleConfig& cfg) {
  const double batch = static_cast<double>(trace.h_a.rows());
  Matrix s = matmul_tn(tap_of(trace, cfg.hebb_tap), trace.h_a);
  s *= static_cast<double>(cfg.hebb_sign) / batch;
  return s;
}

Matrix oja_signal(const LayerTrace& trace, const Matrix& weight, const RuleConfig& cfg) {
  const Matrix y = tap_of(trace, cfg.hebb_tap);
  if (weight.rows() != y.cols() || weight.cols() != trace.h_a.cols()) {
    throw ShapeError("oja_signal: weight " + weight.shape_string() + " does not match trace " +
                     trace.h_b.shape_string() + " / " + trace.h_a.shape_string());
  }
  const double batch = static_cast<double>(y.rows());
  Matrix s = matmul_tn(y, trace.h_a);
  for (std::size_t i = 0; i < weight.rows(); ++i) {
    double y2 = 0.0;
    for (std::size_t b = 0; b < y.rows(); ++b) y2 += y(b, i) * y(b, i);
    for (std::size_t j = 0; j < weight.cols(); ++j) s(i, j) -= y2 * weight(i, j);
  }
  s *= static_cast<double>(cfg.hebb_sign) / batch;
  return s;
}

Matrix weight_standardize(const Matrix& weight) {
  Matrix out(weight.rows(), weight.cols());
  for (std::size_t i = 0; i < weight.rows(); ++i) {
    auto row = weight.row_span(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double norm2 = 0.0;
    for (double v : row) norm2 += (v - mean) * (v - mean);
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < row.size(); ++j) out(i, j) = (row[j] - mean) * inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// DFA

DfaFeedback make_dfa_feedback(const MlpSpec& spec, Rng& rng) {
  DfaFeedback fb;
  for (std::size_t l = 0; l + 1 < spec.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.output_dim + spec.fan_out(l)));
    fb.matrices.push_back(uniform_sample(rng, spec.output_dim, spec.fan_out(l), -limit, limit));
  }
  return fb;
}

Gradients dfa_signal(const Params& params, const ForwardPass& pass, const Matrix& output_error,
                     const DfaFeedback& feedback, const RuleConfig& cfg) {
  const std::size_t layers = pass.traces.size();
  if (layers == 0) throw ConfigError("dfa_signal: no traced layers");
  if (feedback.matrices.size() + 1 != layers) {
    throw ConfigError("dfa_signal: expected " + std::to_string(layers - 1) +
                      " feedback matrices, got " + std::to_string(feedback.matrices.size()));
  }
  Gradients out = Params::zeros_like(params);
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerTrace& t = pass.traces[l];
    Matrix delta;
    if (l + 1 == layers) {
      delta = output_error;
    } else {
      const Matrix& b = feedback.matrices[l];
      if (b.rows() != output_error.cols() || b.cols() != t.h_b.cols()) {
        throw ConfigError("dfa_signal: feedback matrix " + std::to_string(l + 1) + " has shape " +
                          b.shape_string() + ", expected (" +
                          std::to_string(output_error.cols()) + "x" +
                          std::to_string(t.h_b.cols()) + ")");
      }
      delta = hadamard(matmul(output_error, b), activation_derivative(t.activation, t.h_b));
    }
    Matrix gw = matmul_tn(delta, t.h_a);
    maybe_clip(gw, cfg.grad_clip);
    out.mutable_value(t.weight_index) = std::move(gw);
    if (t.bias_index) {
      Matrix gb = column_sums(delta);
      maybe_clip(gb, cfg.grad_clip);
      out.mutable_value(*t.bias_index) = std::move(gb);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// RandomNN

RandomNnNet make_randomnn(const RandomNnConfig& cfg, std::size_t input_dim,
                          const Params& student, Rng& rng) {
  RandomNnNet net;
  net.spec = MlpSpec{input_dim, cfg.hidden, cfg.out_dim, ActivationKind::tanh, false, 1.0};
  net.params = init_params(net.spec, rng);
  for (const auto& e : student.entries()) {
    net.projections.push_back(
        gaussian_sample(rng, e.value.size(), cfg.out_dim, 0.0, cfg.projection_std));
  }
  return net;
}

Matrix randomnn_direction(const RandomNnNet& net, const Matrix& batch_inputs) {
  return row_mean(forward(net.params, net.spec, batch_inputs).outputs);
}

Matrix randomnn_signal(const Matrix& weight, const Matrix& projection, const Matrix& direction,
                       const RandomNnConfig& cfg) {
  if (projection.rows() != weight.size() || projection.cols() != direction.cols() ||
      direction.rows() != 1) {
    throw ShapeError("randomnn_signal: projection " + projection.shape_string() +
                     " incompatible with weight " + weight.shape_string() + " and direction " +
                     direction.shape_string());
  }
  // W* = reshape(P z)
  Matrix target(weight.rows(), weight.cols());
  for (std::size_t i = 0; i < projection.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < projection.cols(); ++k) acc += projection(i, k) * direction(0, k);
    target.values()[i] = acc;
  }
  const double w_norm = frob_norm(weight);
  const double target_norm = frob_norm(target);
  const double diff_norm = frob_norm(weight - target);
  const double s_red = sign_or_plus(w_norm - diff_norm);
  const double s_dir = sign_or_plus(cfg.target_norm - w_norm);
  const double p = target_norm <= 1.0 ? 1.0 : 1.0 / (target_norm + cfg.epsilon);
  target *= p * s_dir * s_red;
  clip_frobenius(target, cfg.clip);
  return target;
}

Matrix randomnn_signal(const Matrix& batch_inputs, const Matrix& weight, std::size_t param_index,
                       const RandomNnConfig& cfg, const RandomNnNet& net) {
  return randomnn_signal(weight, net.projections.at(param_index),
                         randomnn_direction(net, batch_inputs), cfg);
}

// ---------------------------------------------------------------------------
// Noise and updates

NoiseInjection inject_noise(const Params& params, const NoiseConfig& noise, Rng& rng) {
  noise.validate();
  NoiseInjection out{params, std::nullopt};
  if (noise.sigma == 0.0) return out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& v = params.value(i);
    out.evaluated.mutable_value(i) += gaussian_sample(rng, v.rows(), v.cols(), 0.0, noise.sigma);
  }
  if (noise.mode == NoiseMode::transient) out.restore = params;
  return out;
}

std::vector<Matrix> apply_update(Params& params, const Gradients& signal, const RuleConfig& cfg,
                                 OptimizerState& state) {
  if (signal.size() != params.size()) {
    throw ShapeError("apply_update: signal has " + std::to_string(signal.size()) +
                     " entries, params have " + std::to_string(params.size()));
  }
  const bool adam = cfg.kind == RuleKind::adam;
  const bool descent = adam || cfg.kind == RuleKind::sgd || cfg.kind == RuleKind::dfa;
  const double gamma = cfg.decay_kind == DecayKind::none ? 0.0 : cfg.weight_decay;
  const double eta = cfg.eta;

  if (adam && state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& e : params.entries()) {
      state.first_moment.emplace_back(e.value.rows(), e.value.cols());
      state.second_moment.emplace_back(e.value.rows(), e.value.cols());
    }
  }
  const std::uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));

  std::vector<Matrix> next;
  std::vector<Matrix> m_next, v_next;
  next.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& w = params.value(i);
    const Matrix& g = signal.value(i);
    if (!w.same_shape(g)) {
      throw ShapeError("apply_update: signal for '" + params[i].name + "' is " +
                       g.shape_string() + ", parameter is " + w.shape_string());
    }
    Matrix decay(w.rows(), w.cols());
    if (gamma > 0.0) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double x = w.values()[j];
        double d = 0.0;
        if (cfg.decay_kind == DecayKind::l2) {
          d = gamma * x;
        } else if (x != 0.0) {
          const double mag = adam ? gamma : std::min(gamma, std::abs(x) / eta);
          d = x > 0.0 ? mag : -mag;
        }
        decay.values()[j] = d;
      }
    }
    Matrix w_new = w;
    if (adam) {
      Matrix m = state.first_moment[i];
      Matrix v = state.second_moment[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double grad = g.values()[j] + decay.values()[j];
        double& mj = m.values()[j];
        double& vj = v.values()[j];
        mj = cfg.adam_beta1 * mj + (1.0 - cfg.adam_beta1) * grad;
        vj = cfg.adam_beta2 * vj + (1.0 - cfg.adam_beta2) * grad * grad;
        w_new.values()[j] -= eta * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.adam_eps);
      }
      m_next.push_back(std::move(m));
      v_next.push_back(std::move(v));
    } else if (descent) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        w_new.values()[j] -= eta * (g.values()[j] + decay.values()[j]);
      }
    } else {
      for (std::size_t j = 0; j < w.size(); ++j) {
        w_new.values()[j] += eta * (g.values()[j] - decay.values()[j]);
      }
    }
    if (cfg.kind == RuleKind::hebbian &&
        cfg.hebb_normalization == HebbNormalization::weight_standardize &&
        is_traced_weight(params[i])) {
      w_new = weight_standardize(w_new);
    }
    if (!w_new.all_finite()) {
      throw NumericError("apply_update: non-finite value in '" + params[i].name +
                         "' at optimizer step " + std::to_string(t) +
                         " (|W|=" + std::to_string(frob_norm(w)) +
                         ", |signal|=" + std::to_string(frob_norm(g)) + ")");
    }
    next.push_back(std::move(w_new));
  }

  std::vector<Matrix> delta;
  delta.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    delta.push_back(next[i] - params.value(i));
    params.mutable_value(i) = std::move(next[i]);
  }
  if (adam) {
    state.first_moment = std::move(m_next);
    state.second_moment = std::move(v_next);
  }
  state.step = t;
  return delta;
}

// ---------------------------------------------------------------------------

LearningRule::LearningRule(RuleConfig cfg, const ModelSpec& model, std::size_t raw_input_dim,
                           const Params& initial, Rng& rng)
    : cfg_(std::move(cfg)), model_(model) {
  cfg_.validate();
  if (cfg_.kind == RuleKind::dfa) {
    const auto* mlp = std::get_if<MlpSpec>(&model_);
    if (!mlp) throw ConfigError("rule.kind=dfa is only supported for mlp models");
    feedback_ = make_dfa_feedback(*mlp, rng);
  }
  if (cfg_.kind == RuleKind::randomnn) {
    random_net_ = make_randomnn(cfg_.randomnn, raw_input_dim, initial, rng);
  }
}

LearningRule::Signals LearningRule::compute(const Params& params, const ForwardPass& pass,
                                            const Backward& grads, const Matrix& output_error,
                                            const Matrix& raw_inputs) const {
  Signals s{Params::zeros_like(params), {}};
  switch (cfg_.kind) {
    case RuleKind::sgd:
    case RuleKind::adam:
      s.native = grads.grads;
      if (cfg_.grad_clip) {
        for (std::size_t i = 0; i < s.native.size(); ++i) {
          clip_frobenius(s.native.mutable_value(i), *cfg_.grad_clip);
        }
      }
      break;
    case RuleKind::dfa:
      s.native = dfa_signal(params, pass, output_error, *feedback_, cfg_);
      break;
    case RuleKind::hebbian:
    case RuleKind::oja: {
      const bool oja =
          cfg_.kind == RuleKind::oja || cfg_.hebb_normalization == HebbNormalization::oja;
      for (const auto& t : pass.traces) {
        Matrix m = oja ? oja_signal(t, params.value(t.weight_index), cfg_) : hebbian_signal(t, cfg_);
        maybe_clip(m, cfg_.grad_clip);
        s.native.mutable_value(t.weight_index) = std::move(m);
      }
      break;
    }
    case RuleKind::randomnn: {
      const Matrix z = randomnn_direction(*random_net_, raw_inputs);
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.native.mutable_value(i) =
            randomnn_signal(params.value(i), random_net_->projections[i], z, cfg_.randomnn);
      }
      break;
    }
  }
  const bool descent =
      cfg_.kind == RuleKind::sgd || cfg_.kind == RuleKind::adam || cfg_.kind == RuleKind::dfa;
  s.ascent = s.native;
  if (descent) {
    for (std::size_t i = 0; i < s.ascent.size(); ++i) s.ascent.mutable_value(i) *= -1.0;
  }
  return s;
}

std::vector<Matrix> LearningRule::apply(Params& params, const Gradients& native) {
  return apply_update(params, native, cfg_, state_);
}

}  // namespace hebbalign
