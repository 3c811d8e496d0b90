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

// Define-by-run reverse-mode differentiation over DenseArray values.
//
// A Graph records nodes in creation order, which is a topological order, so
// backward is a single reverse sweep that visits each node once. Graphs are
// built fresh per minibatch; Parameters outlive them and receive gradients
// additively until zeroed explicitly.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "imvae/array.hpp"

namespace imvae::diff {

/// A trainable array plus its accumulated gradient (same shape).
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, DenseArray value);

  std::string name;
  DenseArray value;
  DenseArray grad;

  void zero_grad() { grad.fill(0.0); }
};

void zero_grads(std::span<Parameter* const> params);

class Graph;

/// Handle to a graph node. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  const DenseArray& value() const;
  /// Gradient computed by the last backward pass (empty if none reached it,
  /// and always empty for trainable leaves, whose gradient lands in
  /// Parameter::grad).
  const DenseArray& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  /// Receives the node's value and the gradient flowing into it;
  /// accumulates into the parents via grad_buffer().
  using BackwardFn =
      std::function<void(Graph&, const DenseArray& value, const DenseArray& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(DenseArray value);
  /// Trainable leaf: backward adds d(loss)/d(p) into p.grad.
  Var param(Parameter& p);
  /// Frozen leaf referencing p.value; never receives gradient.
  Var param(const Parameter& p);

  /// Backpropagates from a 1x1 loss into every trainable parameter reachable
  /// from it. Throws ContractError for a non-scalar loss.
  void backward(Var loss);
  /// As above, restricted to `targets`: nodes that do not lead to one of the
  /// targets are skipped and other parameters are left untouched.
  void backward(Var loss, std::span<Parameter* const> targets);

  std::size_t size() const { return nodes_.size(); }
  const DenseArray& value(std::size_t id) const;
  const DenseArray& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Op authoring. `record` stores the backward rule only when some parent
  // requires a gradient.
  Var record(DenseArray value, std::initializer_list<Var> parents, BackwardFn backward);
  /// True inside backward when `v` lies on a path to a requested parameter.
  bool wants_grad(Var v) const { return !wanted_.empty() && wanted_[v.id()] != 0; }
  /// Zero-initialized on first use in a backward pass.
  DenseArray& grad_buffer(Var v);

 private:
  struct Node {
    DenseArray owned;
    const DenseArray* external = nullptr;
    DenseArray grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void run_backward(Var loss, std::span<Parameter* const> targets, bool all_params);

  std::deque<Node> nodes_;
  std::vector<char> wanted_;
};

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops require equal shapes (DimensionError).

Var matmul(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var exp(Var a);
/// DomainError if any entry is <= 0.
Var log(Var a);
Var negate(Var a);
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var relu(Var a);
Var square(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double c);
/// Gradient passes only where lo <= a <= hi.
Var clamp(Var a, double lo, double hi);

/// a (r x c) plus row vector (1 x c) added to every row.
Var add_row(Var a, Var row);

Var sum_all(Var a);
Var mean_all(Var a);
/// Per-row sum: r x c -> r x 1.
Var sum_rows(Var a);
/// m + log(sum(exp(v - m))) with m = max(v).
Var log_sum_exp_all(Var a);
/// Row-wise log-softmax.
Var log_softmax_rows(Var a);

Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Row i of the result is row indices[i] of a (differentiable routing).
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var concat_cols(Var a, Var b);
/// D(i, j) = ||a_i - b_j||^2 for a (n x d), b (m x d).
Var pairwise_sq_dist(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return negate(a); }

enum class UnaryOp { exp, log, negate, sigmoid, leaky_relu, relu, square };
enum class BinaryOp { add, sub, mul };
enum class ReduceOp { sum_all, mean_all, sum_rows, log_sum_exp_all };

Var elementwise(UnaryOp op, Var a);
Var elementwise(BinaryOp op, Var a, Var b);
Var reduce(ReduceOp op, Var a);

}  // namespace imvae::diff
