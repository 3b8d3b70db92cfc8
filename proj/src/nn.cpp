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

#include "hebbalign/nn.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

#include "hebbalign/error.hpp"

namespace hebbalign {

namespace {

std::atomic<std::uint64_t> g_revision{0};

std::uint64_t next_revision() { return ++g_revision; }

constexpr double kLayerNormEps = 1e-5;

double glorot_limit(std::size_t fan_in, std::size_t fan_out, double scale) {
  return scale * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix glorot(Rng& rng, std::size_t fan_out, std::size_t fan_in, double scale) {
  const double limit = glorot_limit(fan_in, fan_out, scale);
  if (limit == 0.0) return Matrix(fan_out, fan_in);
  return uniform_sample(rng, fan_out, fan_in, -limit, limit);
}

std::size_t require(const Params& params, const std::string& name) {
  auto idx = params.find(name);
  if (!idx) throw ContractError("missing parameter '" + name + "'");
  return *idx;
}

std::optional<std::size_t> bias_of(const Params& params, const std::string& prefix) {
  return params.find(prefix + ".bias");
}

// h_b = h_a W^T (+ b)
Matrix dense(const Matrix& h_a, const Matrix& weight, const Matrix* bias) {
  if (h_a.cols() != weight.cols()) {
    throw ShapeError("dense: input " + h_a.shape_string() + " does not match weight " +
                     weight.shape_string());
  }
  Matrix h_b = matmul_nt(h_a, weight);
  if (bias) add_row_broadcast(h_b, *bias);
  return h_b;
}

void add_mlp_params(Params& params, const MlpSpec& spec, Rng& rng, const std::string& prefix,
                    int first_layer) {
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const int layer = first_layer + static_cast<int>(l);
    const std::string base = prefix + "layer" + std::to_string(l + 1);
    params.add(base + ".weight", layer, ParamRole::weight,
               glorot(rng, spec.fan_out(l), spec.fan_in(l), spec.init_scale));
    if (spec.use_bias) {
      params.add(base + ".bias", layer, ParamRole::bias, Matrix(1, spec.fan_out(l)));
    }
  }
}

// Runs the MLP (or transformer head) on `input`, appending traces.
Matrix mlp_forward(const Params& params, const MlpSpec& spec, const std::string& prefix,
                   int first_layer, Matrix input, std::vector<LayerTrace>& traces) {
  if (input.cols() != spec.input_dim) {
    throw ShapeError("mlp forward: input " + input.shape_string() + " but the model expects " +
                     std::to_string(spec.input_dim) + " columns");
  }
  Matrix h = std::move(input);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::string base = prefix + "layer" + std::to_string(l + 1);
    LayerTrace t;
    t.layer = first_layer + static_cast<int>(l);
    t.name = base;
    t.weight_index = require(params, base + ".weight");
    t.bias_index = bias_of(params, base);
    t.h_b = dense(h, params.value(t.weight_index),
                  t.bias_index ? &params.value(*t.bias_index) : nullptr);
    const bool last = l + 1 == spec.num_layers();
    t.activation = last ? ActivationKind::identity : spec.activation;
    t.post = last ? t.h_b : apply_activation(spec.activation, t.h_b);
    t.h_a = std::move(h);
    h = t.post;
    traces.push_back(std::move(t));
  }
  return h;
}

// Backpropagates through the traced dense layers [first, last) in reverse.
// Returns dL/d(input of layer `first`).
Matrix dense_chain_backward(const Params& params, const std::vector<LayerTrace>& traces,
                            std::size_t first, std::size_t last, Matrix delta,
                            Backward& out) {
  for (std::size_t i = last; i-- > first;) {
    const LayerTrace& t = traces[i];
    out.grads.mutable_value(t.weight_index) = matmul_tn(delta, t.h_a);
    if (t.bias_index) out.grads.mutable_value(*t.bias_index) = column_sums(delta);
    Matrix upstream = matmul(delta, params.value(t.weight_index));
    out.pre_activation_grads[i] = std::move(delta);
    if (i > first) {
      delta = hadamard(upstream, activation_derivative(traces[i - 1].activation,
                                                       traces[i - 1].h_b));
    } else {
      delta = std::move(upstream);
    }
  }
  return delta;
}

struct LayerNormResult {
  Matrix out;
  Matrix xhat;
  std::vector<double> inv_std;
};

LayerNormResult layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias) {
  LayerNormResult r{Matrix(x.rows(), x.cols()), Matrix(x.rows(), x.cols()), {}};
  r.inv_std.resize(x.rows());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row_span(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    r.inv_std[i] = inv;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double xh = (row[j] - mean) * inv;
      r.xhat(i, j) = xh;
      r.out(i, j) = xh * gain(0, j) + bias(0, j);
    }
  }
  return r;
}

// Returns dL/dx; accumulates gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dout, const Matrix& xhat,
                           const std::vector<double>& inv_std, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  Matrix dx(dout.rows(), dout.cols());
  const double n = static_cast<double>(dout.cols());
  for (std::size_t i = 0; i < dout.rows(); ++i) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < dout.cols(); ++j) {
      const double g = dout(i, j);
      dgain(0, j) += g * xhat(i, j);
      dbias(0, j) += g;
      const double dxh = g * gain(0, j);
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xhat(i, j);
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for (std::size_t j = 0; j < dout.cols(); ++j) {
      const double dxh = dout(i, j) * gain(0, j);
      dx(i, j) = inv_std[i] * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

std::string block_name(std::size_t block) { return "enc" + std::to_string(block + 1); }

}  // namespace

// ---------------------------------------------------------------------------
// Activations

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::relu: return "relu";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::identity: return "identity";
    case ActivationKind::gelu: return "gelu";
  }
  return "?";
}

ActivationKind parse_activation(std::string_view name) {
  for (auto k : {ActivationKind::tanh, ActivationKind::relu, ActivationKind::sigmoid,
                 ActivationKind::identity, ActivationKind::gelu}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double activate(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::relu: return x > 0.0 ? x : 0.0;
    case ActivationKind::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case ActivationKind::identity: return x;
    case ActivationKind::gelu: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  return x;
}

double activate_derivative(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case ActivationKind::identity: return 1.0;
    case ActivationKind::gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
  }
  return 1.0;
}

Matrix apply_activation(ActivationKind kind, const Matrix& x) {
  Matrix out = x;
  if (kind == ActivationKind::identity) return out;
  for (double& v : out.values()) v = activate(kind, v);
  return out;
}

Matrix activation_derivative(ActivationKind kind, const Matrix& x) {
  Matrix out(x.rows(), x.cols(), 1.0);
  if (kind == ActivationKind::identity) return out;
  auto in = x.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = activate_derivative(kind, in[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Specs

std::size_t MlpSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::fan_out(std::size_t layer) const {
  return layer < hidden_dims.size() ? hidden_dims[layer] : output_dim;
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("mlp: dimensions must be positive");
  if (hidden_dims.empty()) throw ConfigError("mlp: at least one hidden layer is required");
  for (auto d : hidden_dims) {
    if (d == 0) throw ConfigError("mlp: hidden dimensions must be positive");
  }
  if (!(init_scale >= 0.0)) throw ConfigError("mlp: init_scale must be >= 0");
}

void TransformerSpec::validate() const {
  if (embed_dim == 0 || vocab == 0 || max_seq == 0 || layers == 0 || heads == 0 ||
      ff_dim == 0) {
    throw ConfigError("transformer: dimensions must be positive");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("transformer: embed_dim " + std::to_string(embed_dim) +
                      " is not divisible by heads " + std::to_string(heads));
  }
  head.validate();
  if (head.input_dim != embed_dim) {
    throw ConfigError("transformer: head input_dim must equal embed_dim");
  }
}

std::size_t traced_layer_count(const ModelSpec& spec) {
  if (auto* mlp = std::get_if<MlpSpec>(&spec)) return mlp->num_layers();
  const auto& tf = std::get<TransformerSpec>(spec);
  return tf.encoder_dense_layers() + tf.head.num_layers();
}

int mlp_layer_index(const ModelSpec& spec, std::size_t k) {
  if (std::holds_alternative<MlpSpec>(spec)) return static_cast<int>(k);
  return static_cast<int>(std::get<TransformerSpec>(spec).encoder_dense_layers() + k);
}

std::string_view to_string(ParamRole role) {
  switch (role) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    case ParamRole::embedding: return "embedding";
    case ParamRole::attention: return "attention";
    case ParamRole::ff: return "ff";
    case ParamRole::norm: return "norm";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Params

void Params::add(std::string name, int layer, ParamRole role, Matrix value) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), layer, role, std::move(value)});
  touch();
}

Matrix& Params::mutable_value(std::size_t i) {
  touch();
  return entries_[i].value;
}

void Params::touch() { revision_ = next_revision(); }

std::optional<std::size_t> Params::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

Params Params::zeros_like(const Params& other) {
  Params out;
  out.entries_.reserve(other.size());
  for (const auto& e : other.entries_) {
    out.entries_.push_back({e.name, e.layer, e.role, Matrix(e.value.rows(), e.value.cols())});
  }
  out.touch();
  return out;
}

bool operator==(const Params& a, const Params& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.layer != y.layer || x.role != y.role || !(x.value == y.value)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Initialization

Params init_params(const ModelSpec& spec, Rng& rng) {
  Params params;
  if (auto* mlp = std::get_if<MlpSpec>(&spec)) {
    mlp->validate();
    add_mlp_params(params, *mlp, rng, "", 1);
    return params;
  }
  const auto& tf = std::get<TransformerSpec>(spec);
  tf.validate();
  const double embed_std = tf.init_scale * 0.02;
  const std::size_t e = tf.embed_dim;
  params.add("tok_embed", 0, ParamRole::embedding, gaussian_sample(rng, tf.vocab, e, 0.0, embed_std));
  params.add("pos_embed", 0, ParamRole::embedding,
             gaussian_sample(rng, tf.max_seq, e, 0.0, embed_std));
  for (std::size_t b = 0; b < tf.layers; ++b) {
    const std::string base = block_name(b);
    const int first = static_cast<int>(b * 6) + 1;
    const char* proj[] = {"q", "k", "v", "o"};
    for (int p = 0; p < 4; ++p) {
      const std::string name = base + "." + proj[p];
      params.add(name + ".weight", first + p, ParamRole::attention,
                 glorot(rng, e, e, tf.init_scale));
      params.add(name + ".bias", first + p, ParamRole::bias, Matrix(1, e));
    }
    params.add(base + ".ln1.gain", 0, ParamRole::norm, Matrix(1, e, 1.0));
    params.add(base + ".ln1.bias", 0, ParamRole::norm, Matrix(1, e));
    params.add(base + ".ff1.weight", first + 4, ParamRole::ff, glorot(rng, tf.ff_dim, e, tf.init_scale));
    params.add(base + ".ff1.bias", first + 4, ParamRole::bias, Matrix(1, tf.ff_dim));
    params.add(base + ".ff2.weight", first + 5, ParamRole::ff, glorot(rng, e, tf.ff_dim, tf.init_scale));
    params.add(base + ".ff2.bias", first + 5, ParamRole::bias, Matrix(1, e));
    params.add(base + ".ln2.gain", 0, ParamRole::norm, Matrix(1, e, 1.0));
    params.add(base + ".ln2.bias", 0, ParamRole::norm, Matrix(1, e));
  }
  add_mlp_params(params, tf.head, rng, "head.", static_cast<int>(tf.encoder_dense_layers()) + 1);
  return params;
}

// ---------------------------------------------------------------------------
// Transformer internals

struct BlockCache {
  Matrix input;                    // (B*S) x E
  std::vector<Matrix> attention;   // B*H matrices, S x S, row-softmaxed
  Matrix heads_concat;             // (B*S) x E
  Matrix xhat1;
  std::vector<double> inv_std1;
  Matrix x1;
  Matrix xhat2;
  std::vector<double> inv_std2;
};

struct TransformerCache {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::size_t> tokens;  // batch * seq
  std::vector<BlockCache> blocks;
};

namespace {

ForwardPass transformer_forward(const Params& params, const TransformerSpec& tf,
                                const Matrix& inputs) {
  tf.validate();
  const std::size_t batch = inputs.rows();
  const std::size_t seq = inputs.cols();
  const std::size_t e = tf.embed_dim;
  if (seq == 0 || seq > tf.max_seq) {
    throw ShapeError("transformer forward: sequence length " + std::to_string(seq) +
                     " outside [1, " + std::to_string(tf.max_seq) + "]");
  }
  auto cache = std::make_shared<TransformerCache>();
  cache->batch = batch;
  cache->seq = seq;
  cache->tokens.resize(batch * seq);
  for (std::size_t i = 0; i < batch * seq; ++i) {
    const double t = inputs.values()[i];
    if (!(t >= 0.0) || t >= static_cast<double>(tf.vocab) || t != std::floor(t)) {
      throw ShapeError("transformer forward: token " + std::to_string(t) +
                       " is not an id in [0, " + std::to_string(tf.vocab) + ")");
    }
    cache->tokens[i] = static_cast<std::size_t>(t);
  }

  const Matrix& tok = params.value(require(params, "tok_embed"));
  const Matrix& pos = params.value(require(params, "pos_embed"));
  Matrix x(batch * seq, e);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < seq; ++s) {
      const std::size_t r = b * seq + s;
      for (std::size_t j = 0; j < e; ++j) x(r, j) = tok(cache->tokens[r], j) + pos(s, j);
    }
  }

  ForwardPass pass;
  const std::size_t dh = e / tf.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto traced_dense = [&](const std::string& name, int layer, const Matrix& h_a,
                          ActivationKind act) -> const LayerTrace& {
    LayerTrace t;
    t.layer = layer;
    t.name = name;
    t.weight_index = require(params, name + ".weight");
    t.bias_index = bias_of(params, name);
    t.h_b = dense(h_a, params.value(t.weight_index),
                  t.bias_index ? &params.value(*t.bias_index) : nullptr);
    t.activation = act;
    t.post = apply_activation(act, t.h_b);
    t.h_a = h_a;
    pass.traces.push_back(std::move(t));
    return pass.traces.back();
  };

  for (std::size_t blk = 0; blk < tf.layers; ++blk) {
    const std::string base = block_name(blk);
    const int first = static_cast<int>(blk * 6) + 1;
    BlockCache bc;
    bc.input = x;
    const Matrix q = traced_dense(base + ".q", first, x, ActivationKind::identity).h_b;
    const Matrix k = traced_dense(base + ".k", first + 1, x, ActivationKind::identity).h_b;
    const Matrix v = traced_dense(base + ".v", first + 2, x, ActivationKind::identity).h_b;

    bc.heads_concat = Matrix(batch * seq, e);
    bc.attention.reserve(batch * tf.heads);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < tf.heads; ++h) {
        Matrix a(seq, seq);
        for (std::size_t i = 0; i < seq; ++i) {
          double max_score = -INFINITY;
          for (std::size_t j = 0; j < seq; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dh; ++c) {
              dot += q(b * seq + i, h * dh + c) * k(b * seq + j, h * dh + c);
            }
            a(i, j) = dot * scale;
            max_score = std::max(max_score, a(i, j));
          }
          double z = 0.0;
          for (std::size_t j = 0; j < seq; ++j) {
            a(i, j) = std::exp(a(i, j) - max_score);
            z += a(i, j);
          }
          for (std::size_t j = 0; j < seq; ++j) a(i, j) /= z;
          for (std::size_t c = 0; c < dh; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < seq; ++j) acc += a(i, j) * v(b * seq + j, h * dh + c);
            bc.heads_concat(b * seq + i, h * dh + c) = acc;
          }
        }
        bc.attention.push_back(std::move(a));
      }
    }
    const Matrix o =
        traced_dense(base + ".o", first + 3, bc.heads_concat, ActivationKind::identity).h_b;
    auto ln1 = layer_norm(x + o, params.value(require(params, base + ".ln1.gain")),
                          params.value(require(params, base + ".ln1.bias")));
    bc.xhat1 = std::move(ln1.xhat);
    bc.inv_std1 = std::move(ln1.inv_std);
    bc.x1 = ln1.out;
    const Matrix f1 = traced_dense(base + ".ff1", first + 4, bc.x1, tf.ff_activation).post;
    const Matrix f2 = traced_dense(base + ".ff2", first + 5, f1, ActivationKind::identity).h_b;
    auto ln2 = layer_norm(bc.x1 + f2, params.value(require(params, base + ".ln2.gain")),
                          params.value(require(params, base + ".ln2.bias")));
    bc.xhat2 = std::move(ln2.xhat);
    bc.inv_std2 = std::move(ln2.inv_std);
    x = std::move(ln2.out);
    cache->blocks.push_back(std::move(bc));
  }

  Matrix pooled(batch, e);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < seq; ++s) {
      for (std::size_t j = 0; j < e; ++j) pooled(b, j) += x(b * seq + s, j);
    }
  }
  pooled *= 1.0 / static_cast<double>(seq);
  pass.outputs = mlp_forward(params, tf.head, "head.",
                             static_cast<int>(tf.encoder_dense_layers()) + 1, std::move(pooled),
                             pass.traces);
  pass.cache = std::move(cache);
  return pass;
}

void transformer_backward(const Params& params, const TransformerSpec& tf,
                          const ForwardPass& pass, const Matrix& output_grad, Backward& out) {
  const auto& cache = *pass.cache;
  const std::size_t batch = cache.batch;
  const std::size_t seq = cache.seq;
  const std::size_t e = tf.embed_dim;
  const std::size_t dh = e / tf.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t n_enc = tf.encoder_dense_layers();

  Matrix dpooled = dense_chain_backward(params, pass.traces, n_enc, pass.traces.size(),
                                        output_grad, out);
  Matrix dx(batch * seq, e);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < seq; ++s) {
      for (std::size_t j = 0; j < e; ++j) {
        dx(b * seq + s, j) = dpooled(b, j) / static_cast<double>(seq);
      }
    }
  }

  // Gradient of one traced dense layer given dL/dh_b; returns dL/dh_a.
  auto dense_back = [&](std::size_t trace_idx, Matrix delta) {
    const LayerTrace& t = pass.traces[trace_idx];
    out.grads.mutable_value(t.weight_index) = matmul_tn(delta, t.h_a);
    if (t.bias_index) out.grads.mutable_value(*t.bias_index) = column_sums(delta);
    Matrix upstream = matmul(delta, params.value(t.weight_index));
    out.pre_activation_grads[trace_idx] = std::move(delta);
    return upstream;
  };

  for (std::size_t blk = tf.layers; blk-- > 0;) {
    const std::string base = block_name(blk);
    const BlockCache& bc = cache.blocks[blk];
    const std::size_t t0 = blk * 6;

    const std::size_t g2 = require(params, base + ".ln2.gain");
    const std::size_t b2 = require(params, base + ".ln2.bias");
    Matrix dr2 = layer_norm_backward(dx, bc.xhat2, bc.inv_std2, params.value(g2),
                                     out.grads.mutable_value(g2), out.grads.mutable_value(b2));
    Matrix dx1 = dr2;
    Matrix df1_post = dense_back(t0 + 5, std::move(dr2));
    const LayerTrace& ff1 = pass.traces[t0 + 4];
    dx1 += dense_back(t0 + 4,
                      hadamard(df1_post, activation_derivative(ff1.activation, ff1.h_b)));

    const std::size_t g1 = require(params, base + ".ln1.gain");
    const std::size_t b1 = require(params, base + ".ln1.bias");
    Matrix dr1 = layer_norm_backward(dx1, bc.xhat1, bc.inv_std1, params.value(g1),
                                     out.grads.mutable_value(g1), out.grads.mutable_value(b1));
    dx = dr1;
    const Matrix dheads = dense_back(t0 + 3, std::move(dr1));

    const Matrix& q = pass.traces[t0].h_b;
    const Matrix& k = pass.traces[t0 + 1].h_b;
    const Matrix& v = pass.traces[t0 + 2].h_b;
    Matrix dq(batch * seq, e), dk(batch * seq, e), dv(batch * seq, e);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < tf.heads; ++h) {
        const Matrix& a = bc.attention[b * tf.heads + h];
        Matrix da(seq, seq);
        for (std::size_t i = 0; i < seq; ++i) {
          for (std::size_t j = 0; j < seq; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dh; ++c) {
              acc += dheads(b * seq + i, h * dh + c) * v(b * seq + j, h * dh + c);
              dv(b * seq + j, h * dh + c) += a(i, j) * dheads(b * seq + i, h * dh + c);
            }
            da(i, j) = acc;
          }
        }
        for (std::size_t i = 0; i < seq; ++i) {
          double row_dot = 0.0;
          for (std::size_t j = 0; j < seq; ++j) row_dot += da(i, j) * a(i, j);
          for (std::size_t j = 0; j < seq; ++j) {
            const double ds = a(i, j) * (da(i, j) - row_dot) * scale;
            if (ds == 0.0) continue;
            for (std::size_t c = 0; c < dh; ++c) {
              dq(b * seq + i, h * dh + c) += ds * k(b * seq + j, h * dh + c);
              dk(b * seq + j, h * dh + c) += ds * q(b * seq + i, h * dh + c);
            }
          }
        }
      }
    }
    dx += dense_back(t0, std::move(dq));
    dx += dense_back(t0 + 1, std::move(dk));
    dx += dense_back(t0 + 2, std::move(dv));
  }

  const std::size_t tok_idx = require(params, "tok_embed");
  const std::size_t pos_idx = require(params, "pos_embed");
  Matrix& dtok = out.grads.mutable_value(tok_idx);
  Matrix& dpos = out.grads.mutable_value(pos_idx);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < seq; ++s) {
      const std::size_t r = b * seq + s;
      for (std::size_t j = 0; j < e; ++j) {
        dtok(cache.tokens[r], j) += dx(r, j);
        dpos(s, j) += dx(r, j);
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward / loss / backward

ForwardPass forward(const Params& params, const ModelSpec& spec, const Matrix& inputs) {
  if (auto* mlp = std::get_if<MlpSpec>(&spec)) {
    ForwardPass pass;
    pass.outputs = mlp_forward(params, *mlp, "", 1, inputs, pass.traces);
    pass.revision = params.revision();
    return pass;
  }
  ForwardPass pass = transformer_forward(params, std::get<TransformerSpec>(spec), inputs);
  pass.revision = params.revision();
  return pass;
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mse: return "mse";
    case LossKind::mse_mean: return "mse_mean";
    case LossKind::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "mse_mean") return LossKind::mse_mean;
  if (name == "softmax_cross_entropy" || name == "cross_entropy") {
    return LossKind::softmax_cross_entropy;
  }
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

LossResult loss_and_grad(const Matrix& outputs, const Matrix& targets, LossKind kind) {
  const std::size_t batch = outputs.rows();
  if (batch == 0) throw ShapeError("loss_and_grad: empty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch);
  LossResult r{0.0, Matrix(outputs.rows(), outputs.cols())};
  if (kind == LossKind::mse || kind == LossKind::mse_mean) {
    if (!outputs.same_shape(targets)) {
      throw ShapeError("loss_and_grad: outputs " + outputs.shape_string() + " vs targets " +
                       targets.shape_string());
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const double diff = outputs.values()[i] - targets.values()[i];
      r.loss += diff * diff;
      r.grad.values()[i] = 2.0 * diff * inv_batch;
    }
    r.loss *= inv_batch;
    if (kind == LossKind::mse_mean && outputs.cols() > 0) {
      const double inv_cols = 1.0 / static_cast<double>(outputs.cols());
      r.loss *= inv_cols;
      r.grad *= inv_cols;
    }
    return r;
  }
  if (targets.rows() != batch || targets.cols() != 1) {
    throw ShapeError("loss_and_grad: class targets must be " + std::to_string(batch) +
                     "x1, got " + targets.shape_string());
  }
  const std::size_t classes = outputs.cols();
  for (std::size_t i = 0; i < batch; ++i) {
    const double label = targets(i, 0);
    if (!(label >= 0.0) || label >= static_cast<double>(classes) || label != std::floor(label)) {
      throw DataError("loss_and_grad: invalid class index " + std::to_string(label) +
                      " at row " + std::to_string(i));
    }
    const auto cls = static_cast<std::size_t>(label);
    auto row = outputs.row_span(i);
    double max_logit = row[0];
    for (double v : row) max_logit = std::max(max_logit, v);
    double z = 0.0;
    for (double v : row) z += std::exp(v - max_logit);
    const double log_z = std::log(z) + max_logit;
    r.loss += log_z - row[cls];
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(row[j] - log_z);
      r.grad(i, j) = (p - (j == cls ? 1.0 : 0.0)) * inv_batch;
    }
  }
  r.loss *= inv_batch;
  return r;
}

Backward backward(const Params& params, const ModelSpec& spec, const ForwardPass& pass,
                  const Matrix& output_grad) {
  if (pass.revision != params.revision()) {
    throw ContractError("backward: traces were produced by a different parameter revision");
  }
  if (!output_grad.same_shape(pass.outputs)) {
    throw ShapeError("backward: output gradient " + output_grad.shape_string() +
                     " vs outputs " + pass.outputs.shape_string());
  }
  Backward out{Params::zeros_like(params), std::vector<Matrix>(pass.traces.size())};
  if (std::holds_alternative<MlpSpec>(spec)) {
    dense_chain_backward(params, pass.traces, 0, pass.traces.size(), output_grad, out);
  } else {
    if (!pass.cache) throw ContractError("backward: transformer pass without cache");
    transformer_backward(params, std::get<TransformerSpec>(spec), pass, output_grad, out);
  }
  return out;
}

}  // namespace hebbalign
