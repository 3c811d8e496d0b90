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

#include "imvae/adam.hpp"

#include <cmath>

#include <Eigen/Core>

#include "imvae/errors.hpp"

namespace imvae {

namespace {

Eigen::Map<Eigen::ArrayXd> flat(DenseArray& a) {
  return {a.data().data(), static_cast<Eigen::Index>(a.size())};
}

Eigen::Map<const Eigen::ArrayXd> flat(const DenseArray& a) {
  return {a.data().data(), static_cast<Eigen::Index>(a.size())};
}

}  // namespace

void adam_step(AdamState& state, std::span<DenseArray* const> params,
               std::span<const DenseArray* const> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const DenseArray* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " arrays, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k]) || !params[k]->same_shape(state.first_moment[k])) {
      throw DimensionError("adam_step: array " + std::to_string(k) + " has shape " +
                           params[k]->shape_string() + ", gradient " +
                           grads[k]->shape_string() + ", moments " +
                           state.first_moment[k].shape_string());
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double step_size = state.learning_rate / correction1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(correction2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = flat(*params[k]);
    auto g = flat(*grads[k]);
    auto m = flat(state.first_moment[k]);
    auto v = flat(state.second_moment[k]);
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    // lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections folded in.
    p -= step_size * m / (v.sqrt() * inv_sqrt_c2 + state.epsilon);
  }
}

Adam::Adam(std::vector<diff::Parameter*> params, double learning_rate)
    : params_(std::move(params)) {
  state_.learning_rate = learning_rate;
}

void Adam::step() {
  std::vector<DenseArray*> values;
  std::vector<const DenseArray*> grads;
  values.reserve(params_.size());
  grads.reserve(params_.size());
  for (diff::Parameter* p : params_) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step(state_, values, grads);
}

void Adam::zero_grad() { diff::zero_grads(params_); }

}  // namespace imvae
