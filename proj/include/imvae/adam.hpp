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

#include <cstdint>
#include <span>
#include <vector>

#include "imvae/array.hpp"
#include "imvae/graph.hpp"

namespace imvae {

struct AdamState {
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<DenseArray> first_moment;
  std::vector<DenseArray> second_moment;
};

/// One bias-corrected Adam update applied in place. Moment buffers are
/// created on the first call. Throws DimensionError when params, grads and
/// moments disagree in count or shape.
void adam_step(AdamState& state, std::span<DenseArray* const> params,
               std::span<const DenseArray* const> grads);

/// Adam bound to a fixed list of Parameters.
class Adam {
 public:
  Adam(std::vector<diff::Parameter*> params, double learning_rate);

  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  std::span<diff::Parameter* const> params() const { return params_; }

 private:
  std::vector<diff::Parameter*> params_;
  AdamState state_;
};

}  // namespace imvae
