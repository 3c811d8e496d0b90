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

#pragma once

// Encoder q(z|x), decoder p(x|z) and the critic t(x, z), all fully connected.
//
// Encoder: input -> 4 x [hidden, LeakyReLU(0.2)] -> 2*z_dim (mean, log-variance)
// Decoder: z_dim -> 4 x [hidden, LeakyReLU(0.2)] -> input, sigmoid
// Critic:  concat(x, z) -> 2 x [critic_hidden, LeakyReLU(0.2)] -> 1, linear
//
// Layers are affine maps y = x W + b with W stored fan_in x fan_out.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "imvae/array.hpp"
#include "imvae/graph.hpp"

namespace imvae {

inline constexpr std::size_t kCoderHiddenLayers = 4;
inline constexpr std::size_t kCriticHiddenLayers = 2;
inline constexpr double kLeakySlope = 0.2;

struct ModelShape {
  std::size_t input_dim = 784;
  std::size_t z_dim = 8;
  std::size_t hidden = 256;
  std::size_t critic_hidden = 400;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct Linear {
  diff::Parameter weight;
  diff::Parameter bias;

  std::size_t fan_in() const { return weight.value.rows(); }
  std::size_t fan_out() const { return weight.value.cols(); }
};

struct Encoder {
  std::vector<Linear> layers;
  std::size_t z_dim = 0;
};

struct Decoder {
  std::vector<Linear> layers;
};

/// The first layer's weight has input_dim + z_dim rows: the x block first,
/// then the z block.
struct Critic {
  std::vector<Linear> layers;
  std::size_t input_dim = 0;
};

struct Model {
  ModelShape shape;
  Encoder encoder;
  Decoder decoder;
  Critic critic;

  /// Encoder then decoder parameters (theta, phi).
  std::vector<diff::Parameter*> vae_parameters();
  std::vector<diff::Parameter*> critic_parameters();
  /// Checkpoint order: encoder, decoder, critic; weight before bias per layer.
  std::vector<diff::Parameter*> all_parameters();
  std::vector<const diff::Parameter*> all_parameters() const;
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero;
/// deterministic in `seed`. Throws ContractError for zero widths.
Model init_params(const ModelShape& shape, std::uint64_t seed);
Critic init_critic(std::size_t input_dim, std::size_t z_dim, std::size_t hidden,
                   std::uint64_t seed);

/// q(z|x) parameters for a batch, as graph nodes.
struct GaussianPosterior {
  diff::Var mean;
  diff::Var log_var;
};

// The templates below are instantiated for mutable (trainable) and const
// (frozen) networks.

template <class EncoderT>
GaussianPosterior encode(diff::Graph& g, EncoderT& encoder, diff::Var x);

/// z = mean + exp(log_var / 2) * noise.
diff::Var reparameterize(const GaussianPosterior& posterior, diff::Var noise);

/// Bernoulli means in (0, 1).
template <class DecoderT>
diff::Var decode(diff::Graph& g, DecoderT& decoder, diff::Var z);

/// One unconstrained score per row of (x, z).
template <class CriticT>
diff::Var critic_score(diff::Graph& g, CriticT& critic, diff::Var x, diff::Var z);

struct CriticScores {
  diff::Var joint;
  diff::Var marginal;
};

/// Scores for (x, z) and (x, z_tilde) sharing the x projection of the
/// first layer.
template <class CriticT>
CriticScores critic_score_pair(diff::Graph& g, CriticT& critic, diff::Var x, diff::Var z,
                               diff::Var z_tilde);

}  // namespace imvae
