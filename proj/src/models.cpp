// Copyright 2026 The imvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "imvae/models.hpp"

#include <cmath>
#include <string>

#include "imvae/errors.hpp"
#include "imvae/rng.hpp"

namespace imvae {

using diff::Graph;
using diff::Var;

namespace {

Linear make_linear(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) {
    throw ContractError("layer " + name + " has a zero width (" + std::to_string(fan_in) +
                        " -> " + std::to_string(fan_out) + ")");
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseArray w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return Linear{diff::Parameter(name + ".weight", std::move(w)),
                diff::Parameter(name + ".bias", DenseArray(1, fan_out))};
}

std::vector<Linear> make_stack(const std::string& prefix, std::size_t in, std::size_t hidden,
                               std::size_t hidden_layers, std::size_t out, Rng& rng) {
  std::vector<Linear> layers;
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    layers.push_back(make_linear(prefix + "." + std::to_string(i), width, hidden, rng));
    width = hidden;
  }
  layers.push_back(make_linear(prefix + "." + std::to_string(hidden_layers), width, out, rng));
  return layers;
}

template <class LinearT>
Var affine(Graph& g, LinearT& layer, Var x) {
  return diff::add_row(diff::matmul(x, g.param(layer.weight)), g.param(layer.bias));
}

template <class LayersT>
Var hidden_stack(Graph& g, LayersT& layers, Var h, std::size_t first, std::size_t last) {
  for (std::size_t i = first; i < last; ++i) {
    h = diff::leaky_relu(affine(g, layers[i], h), kLeakySlope);
  }
  return h;
}

void require_cols(const char* what, Var x, std::size_t expected) {
  if (x.cols() != expected) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) +
                         " columns, got " + x.value().shape_string());
  }
}

// x W_x + z W_z + b for the critic's first layer, W = [W_x; W_z].
struct CriticInput {
  Var x_proj;
  Var w_z;
  Var bias;
};

template <class CriticT>
CriticInput critic_input(Graph& g, CriticT& critic, Var x) {
  auto& first = critic.layers.front();
  const std::size_t z_dim = first.fan_in() - critic.input_dim;
  Var w = g.param(first.weight);
  Var w_x = diff::slice_rows(w, 0, critic.input_dim);
  Var w_z = diff::slice_rows(w, critic.input_dim, z_dim);
  return {diff::matmul(x, w_x), w_z, g.param(first.bias)};
}

template <class CriticT>
Var critic_head(Graph& g, CriticT& critic, Var pre_activation) {
  Var h = diff::leaky_relu(pre_activation, kLeakySlope);
  h = hidden_stack(g, critic.layers, h, 1, critic.layers.size() - 1);
  return affine(g, critic.layers.back(), h);
}

}  // namespace

std::vector<diff::Parameter*> Model::vae_parameters() {
  std::vector<diff::Parameter*> out;
  for (auto* layers : {&encoder.layers, &decoder.layers}) {
    for (Linear& l : *layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<diff::Parameter*> Model::critic_parameters() {
  std::vector<diff::Parameter*> out;
  for (Linear& l : critic.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<diff::Parameter*> Model::all_parameters() {
  auto out = vae_parameters();
  for (diff::Parameter* p : critic_parameters()) out.push_back(p);
  return out;
}

std::vector<const diff::Parameter*> Model::all_parameters() const {
  auto mutable_params = const_cast<Model*>(this)->all_parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

Critic init_critic(std::size_t input_dim, std::size_t z_dim, std::size_t hidden,
                   std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 3);
  Critic critic;
  critic.input_dim = input_dim;
  critic.layers = make_stack("critic", input_dim + z_dim, hidden, kCriticHiddenLayers, 1, rng);
  return critic;
}

Model init_params(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.z_dim == 0 || shape.hidden == 0 ||
      shape.critic_hidden == 0) {
    throw ContractError("init_params: all widths must be positive");
  }
  Model model;
  model.shape = shape;
  Rng enc_rng = Rng::stream(seed, 1);
  Rng dec_rng = Rng::stream(seed, 2);
  model.encoder.z_dim = shape.z_dim;
  model.encoder.layers = make_stack("encoder", shape.input_dim, shape.hidden,
                                    kCoderHiddenLayers, 2 * shape.z_dim, enc_rng);
  model.decoder.layers = make_stack("decoder", shape.z_dim, shape.hidden, kCoderHiddenLayers,
                                    shape.input_dim, dec_rng);
  model.critic = init_critic(shape.input_dim, shape.z_dim, shape.critic_hidden, seed);
  return model;
}

template <class EncoderT>
GaussianPosterior encode(Graph& g, EncoderT& encoder, Var x) {
  require_cols("encode", x, encoder.layers.front().fan_in());
  Var h = hidden_stack(g, encoder.layers, x, 0, encoder.layers.size() - 1);
  Var out = affine(g, encoder.layers.back(), h);
  return {diff::slice_cols(out, 0, encoder.z_dim),
          diff::slice_cols(out, encoder.z_dim, encoder.z_dim)};
}

Var reparameterize(const GaussianPosterior& posterior, Var noise) {
  if (!noise.value().same_shape(posterior.mean.value())) {
    throw DimensionError("reparameterize: noise " + noise.value().shape_string() +
                         " vs posterior " + posterior.mean.value().shape_string());
  }
  Var sigma = diff::exp(diff::scale(posterior.log_var, 0.5));
  return diff::add(posterior.mean, diff::mul(sigma, noise));
}

template <class DecoderT>
Var decode(Graph& g, DecoderT& decoder, Var z) {
  require_cols("decode", z, decoder.layers.front().fan_in());
  Var h = hidden_stack(g, decoder.layers, z, 0, decoder.layers.size() - 1);
  return diff::sigmoid(affine(g, decoder.layers.back(), h));
}

template <class CriticT>
Var critic_score(Graph& g, CriticT& critic, Var x, Var z) {
  require_cols("critic_score(x)", x, critic.input_dim);
  require_cols("critic_score(z)", z, critic.layers.front().fan_in() - critic.input_dim);
  if (x.rows() != z.rows()) {
    throw DimensionError("critic_score: x has " + std::to_string(x.rows()) + " rows, z has " +
                         std::to_string(z.rows()));
  }
  auto in = critic_input(g, critic, x);
  Var pre = diff::add_row(diff::add(in.x_proj, diff::matmul(z, in.w_z)), in.bias);
  return critic_head(g, critic, pre);
}

template <class CriticT>
CriticScores critic_score_pair(Graph& g, CriticT& critic, Var x, Var z, Var z_tilde) {
  require_cols("critic_score(x)", x, critic.input_dim);
  const std::size_t z_dim = critic.layers.front().fan_in() - critic.input_dim;
  require_cols("critic_score(z)", z, z_dim);
  require_cols("critic_score(z_tilde)", z_tilde, z_dim);
  if (x.rows() != z.rows() || x.rows() != z_tilde.rows()) {
    throw DimensionError("critic_score_pair: row counts differ");
  }
  auto in = critic_input(g, critic, x);
  Var joint = diff::add_row(diff::add(in.x_proj, diff::matmul(z, in.w_z)), in.bias);
  Var marginal = diff::add_row(diff::add(in.x_proj, diff::matmul(z_tilde, in.w_z)), in.bias);
  return {critic_head(g, critic, joint), critic_head(g, critic, marginal)};
}

template GaussianPosterior encode<Encoder>(Graph&, Encoder&, Var);
template GaussianPosterior encode<const Encoder>(Graph&, const Encoder&, Var);
template Var decode<Decoder>(Graph&, Decoder&, Var);
template Var decode<const Decoder>(Graph&, const Decoder&, Var);
template Var critic_score<Critic>(Graph&, Critic&, Var, Var);
template Var critic_score<const Critic>(Graph&, const Critic&, Var, Var);
template CriticScores critic_score_pair<Critic>(Graph&, Critic&, Var, Var, Var);
template CriticScores critic_score_pair<const Critic>(Graph&, const Critic&, Var, Var, Var);

}  // namespace imvae
