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

// Central finite-difference gradient checks against Graph::backward.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "imvae/graph.hpp"
#include "imvae/rng.hpp"

namespace imvae::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Compares d(loss)/d(param) from backward with (f(p+h) - f(p-h)) / 2h.
/// `probes_per_param` entries are drawn at random per parameter (all
/// entries when 0).
inline GradCheck check_gradients(const std::vector<diff::Parameter*>& params,
                                 const std::function<diff::Var(diff::Graph&)>& loss_fn,
                                 std::size_t probes_per_param = 0, std::uint64_t seed = 1,
                                 double h = 1e-5) {
  diff::zero_grads(params);
  {
    diff::Graph g;
    g.backward(loss_fn(g));
  }
  auto eval = [&] {
    diff::Graph g;
    return loss_fn(g).value().item();
  };
  Rng rng(seed);
  GradCheck out;
  for (diff::Parameter* p : params) {
    std::vector<std::size_t> idx;
    if (probes_per_param == 0 || probes_per_param >= p->value.size()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t k = 0; k < probes_per_param; ++k) idx.push_back(rng.below(p->value.size()));
    }
    for (std::size_t i : idx) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = eval();
      p->value[i] = saved - h;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel_error = std::max(out.max_rel_error, relative_error(p->grad[i], numeric));
      ++out.probes;
    }
  }
  return out;
}

inline DenseArray uniform_array(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  DenseArray a(r, c);
  for (double& v : a.data()) v = rng.uniform(lo, hi);
  return a;
}

}  // namespace imvae::testing
