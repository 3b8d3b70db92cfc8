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

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hebbalign/rng.hpp"
#include "hebbalign/tensor.hpp"

namespace hebbalign {

enum class ActivationKind { tanh, relu, sigmoid, identity, gelu };

std::string_view to_string(ActivationKind kind);
ActivationKind parse_activation(std::string_view name);

double activate(ActivationKind kind, double x);
double activate_derivative(ActivationKind kind, double x);
Matrix apply_activation(ActivationKind kind, const Matrix& x);
Matrix activation_derivative(ActivationKind kind, const Matrix& x);

struct MlpSpec {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden_dims = {128, 128};
  std::size_t output_dim = 32;
  ActivationKind activation = ActivationKind::tanh;
  bool use_bias = false;
  double init_scale = 1.0;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;   // 0-based dense layer
  std::size_t fan_out(std::size_t layer) const;
  void validate() const;
};

// Post-LN encoder (residual + LayerNorm around attention and feed-forward
// blocks), learned token and position embeddings, mean pooling over tokens,
// then the MLP head.
struct TransformerSpec {
  std::size_t embed_dim = 32;
  std::size_t vocab = 16;
  std::size_t max_seq = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 32;
  ActivationKind ff_activation = ActivationKind::relu;
  double init_scale = 1.0;
  MlpSpec head{32, {128, 128}, 32, ActivationKind::tanh, false, 1.0};

  void validate() const;
  // Number of traced dense layers inside the encoder (6 per block).
  std::size_t encoder_dense_layers() const { return layers * 6; }
};

using ModelSpec = std::variant<MlpSpec, TransformerSpec>;

// Total number of traced dense layers the model exposes.
std::size_t traced_layer_count(const ModelSpec& spec);
// Trace index (1-based) of the k-th layer of the MLP (head) part.
int mlp_layer_index(const ModelSpec& spec, std::size_t k);

enum class ParamRole { weight, bias, embedding, attention, ff, norm };
std::string_view to_string(ParamRole role);

struct ParamEntry {
  std::string name;
  int layer = 0;  // 1-based trace index for dense weights/biases; 0 otherwise
  ParamRole role = ParamRole::weight;
  Matrix value;
};

// Ordered, named parameter set. Every mutable access stamps a fresh global
// revision so forward passes can detect that they went stale.
class Params {
 public:
  void add(std::string name, int layer, ParamRole role, Matrix value);

  std::size_t size() const { return entries_.size(); }
  const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  const Matrix& value(std::size_t i) const { return entries_[i].value; }
  Matrix& mutable_value(std::size_t i);
  std::optional<std::size_t> find(std::string_view name) const;
  std::uint64_t revision() const { return revision_; }
  void touch();

  // Same names/roles/shapes, all values zero.
  static Params zeros_like(const Params& other);

  friend bool operator==(const Params& a, const Params& b);

 private:
  std::vector<ParamEntry> entries_;
  std::uint64_t revision_ = 0;
};

using Gradients = Params;

// One weight-bearing dense layer evaluation: h_b = h_a W^T (+ b).
struct LayerTrace {
  int layer = 0;  // 1-based
  std::string name;
  Matrix h_a;   // rows x fan_in
  Matrix h_b;   // rows x fan_out
  Matrix post;  // activation(h_b); equals h_b for linear layers
  ActivationKind activation = ActivationKind::identity;
  std::size_t weight_index = 0;
  std::optional<std::size_t> bias_index;
};

struct TransformerCache;

struct ForwardPass {
  Matrix outputs;
  std::vector<LayerTrace> traces;
  std::uint64_t revision = 0;
  std::shared_ptr<const TransformerCache> cache;
};

enum class LossKind { mse, mse_mean, softmax_cross_entropy };
std::string_view to_string(LossKind kind);
LossKind parse_loss(std::string_view name);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // dL/d_outputs, already divided by the batch size
};

struct Backward {
  Gradients grads;
  // dL/dh_b per trace, same order as ForwardPass::traces.
  std::vector<Matrix> pre_activation_grads;
};

Params init_params(const ModelSpec& spec, Rng& rng);

// MLP: `inputs` is batch x input_dim. Transformer: `inputs` is batch x seq of
// integer token ids in [0, vocab).
ForwardPass forward(const Params& params, const ModelSpec& spec, const Matrix& inputs);

// mse: per-sample squared error summed over outputs, averaged over the batch.
// mse_mean: the same divided by the output dim, i.e. the mean over all elements.
// softmax_cross_entropy: targets are a batch x 1 matrix of class indices.
LossResult loss_and_grad(const Matrix& outputs, const Matrix& targets, LossKind kind);

Backward backward(const Params& params, const ModelSpec& spec, const ForwardPass& pass,
                  const Matrix& output_grad);

}  // namespace hebbalign
