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

#include "imvae/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "eigen_view.hpp"
#include "imvae/errors.hpp"

namespace imvae::diff {

using detail::view;

Parameter::Parameter(std::string name, DenseArray value)
    : name(std::move(name)), value(std::move(value)) {
  grad = DenseArray(this->value.rows(), this->value.cols());
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

const DenseArray& Var::value() const { return graph_->value(id_); }
const DenseArray& Var::grad() const { return graph_->grad(id_); }

const DenseArray& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.owned;
}

Var Graph::constant(DenseArray value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  if (!p.grad.same_shape(p.value)) p.grad = DenseArray(p.value.rows(), p.value.cols());
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Parameter& p) {
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(DenseArray value, std::initializer_list<Var> parents, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& p : parents) {
    if (p.graph_ != this) throw ContractError("operand belongs to a different graph");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) {
    n.parents.reserve(parents.size());
    for (const Var& p : parents) n.parents.push_back(p.id_);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

DenseArray& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id_];
  // Trainable leaves accumulate straight into their parameter.
  if (n.param != nullptr) return n.param->grad;
  if (n.grad.empty()) {
    const DenseArray& val = value(v.id_);
    n.grad = DenseArray(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::backward(Var loss) { run_backward(loss, {}, true); }

void Graph::backward(Var loss, std::span<Parameter* const> targets) {
  run_backward(loss, targets, false);
}

void Graph::run_backward(Var loss, std::span<Parameter* const> targets, bool all_params) {
  if (loss.graph_ != this) throw ContractError("backward: loss belongs to a different graph");
  const DenseArray& lv = value(loss.id_);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());
  }

  const std::size_t count = loss.id_ + 1;
  wanted_.assign(nodes_.size(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    Node& n = nodes_[i];
    n.grad = DenseArray();
    if (n.param != nullptr) {
      wanted_[i] = all_params ||
                   std::find(targets.begin(), targets.end(), n.param) != targets.end();
    } else if (n.requires_grad) {
      wanted_[i] = std::any_of(n.parents.begin(), n.parents.end(),
                               [&](std::size_t p) { return wanted_[p] != 0; });
    }
  }

  if (wanted_[loss.id_]) {
    nodes_[loss.id_].grad = DenseArray(1, 1, 1.0);
    for (std::size_t i = count; i-- > 0;) {
      Node& n = nodes_[i];
      if (!wanted_[i] || n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, value(i), n.grad);
      }
    }
  }
  wanted_.clear();
}

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}

void require_nonempty(const char* op, Var a) {
  if (a.value().empty()) throw ContractError(std::string(op) + ": empty operand");
}

using FlatArray = Eigen::Map<Eigen::ArrayXd>;
using ConstFlatArray = Eigen::Map<const Eigen::ArrayXd>;

FlatArray flat(DenseArray& a) { return {a.data().data(), static_cast<Eigen::Index>(a.size())}; }

ConstFlatArray flat(const DenseArray& a) {
  return {a.data().data(), static_cast<Eigen::Index>(a.size())};
}

constexpr double kSigmoidLow = std::numeric_limits<double>::min();
constexpr double kSigmoidHigh = 1.0 - 0x1.0p-53;

template <class X>
auto filled(const X& x, double v) {
  return Eigen::ArrayXd::Constant(x.size(), v);
}

// y = f(x) elementwise; dx += dy * deriv(x, y). Both functors take and return
// Eigen array expressions so the loops vectorize.
template <class Fwd, class Deriv>
Var unary_op(Var a, Fwd fwd, Deriv deriv) {
  const DenseArray& x = a.value();
  DenseArray y(x.rows(), x.cols());
  flat(y) = fwd(flat(x));
  return a.graph().record(std::move(y), {a},
                          [a, deriv](Graph& g, const DenseArray& y, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            flat(g.grad_buffer(a)) += flat(gy) * deriv(flat(a.value()), flat(y));
                          });
}

}  // namespace

Var matmul(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shape mismatch " + av.shape_string() + " x " +
                         bv.shape_string());
  }
  DenseArray out(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  return a.graph().record(std::move(out), {a, b},
                          [a, b](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (g.wants_grad(a)) {
                              view(g.grad_buffer(a)).noalias() +=
                                  view(gy) * view(b.value()).transpose();
                            }
                            if (g.wants_grad(b)) {
                              view(g.grad_buffer(b)).noalias() +=
                                  view(a.value()).transpose() * view(gy);
                            }
                          });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  DenseArray out = a.value();
  const DenseArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.graph().record(std::move(out), {a, b},
                          [a, b](Graph& g, const DenseArray&, const DenseArray& gy) {
                            for (Var v : {a, b}) {
                              if (!g.wants_grad(v)) continue;
                              DenseArray& gv = g.grad_buffer(v);
                              for (std::size_t i = 0; i < gy.size(); ++i) gv[i] += gy[i];
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  DenseArray out = a.value();
  const DenseArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph().record(std::move(out), {a, b},
                          [a, b](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (g.wants_grad(a)) {
                              DenseArray& ga = g.grad_buffer(a);
                              for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
                            }
                            if (g.wants_grad(b)) {
                              DenseArray& gb = g.grad_buffer(b);
                              for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
                            }
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  DenseArray out = a.value();
  const DenseArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph().record(std::move(out), {a, b},
                          [a, b](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (g.wants_grad(a)) {
                              DenseArray& ga = g.grad_buffer(a);
                              const DenseArray& bv = b.value();
                              for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
                            }
                            if (g.wants_grad(b)) {
                              DenseArray& gb = g.grad_buffer(b);
                              const DenseArray& av = a.value();
                              for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
                            }
                          });
}

Var exp(Var a) {
  return unary_op(a, [](auto x) { return x.exp(); }, [](auto, auto y) { return y; });
}

Var log(Var a) {
  const DenseArray& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError("log: non-positive value " + std::to_string(x[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return unary_op(a, [](auto x) { return x.log(); }, [](auto x, auto) { return x.inverse(); });
}

Var negate(Var a) {
  return unary_op(a, [](auto x) { return -x; }, [](auto x, auto) { return filled(x, -1.0); });
}

Var sigmoid(Var a) {
  // Clamped so that y and 1 - y stay representable and positive.
  return unary_op(
      a,
      [](auto x) {
        return ((-x).exp() + 1.0).inverse().max(kSigmoidLow).min(kSigmoidHigh);
      },
      [](auto, auto y) { return y * (1.0 - y); });
}

Var leaky_relu(Var a, double slope) {
  return unary_op(a, [slope](auto x) { return (x > 0.0).select(x, slope * x); },
                  [slope](auto x, auto) { return (x > 0.0).select(filled(x, 1.0), slope); });
}

Var relu(Var a) {
  return unary_op(a, [](auto x) { return x.max(0.0); },
                  [](auto x, auto) { return (x > 0.0).select(filled(x, 1.0), 0.0); });
}

Var square(Var a) {
  return unary_op(a, [](auto x) { return x.square(); }, [](auto x, auto) { return 2.0 * x; });
}

Var scale(Var a, double s) {
  return unary_op(a, [s](auto x) { return s * x; }, [s](auto x, auto) { return filled(x, s); });
}

Var add_scalar(Var a, double c) {
  return unary_op(a, [c](auto x) { return x + c; }, [](auto x, auto) { return filled(x, 1.0); });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary_op(a, [lo, hi](auto x) { return x.max(lo).min(hi); },
                  [lo, hi](auto x, auto) {
                    return (x >= lo && x <= hi).select(filled(x, 1.0), 0.0);
                  });
}

Var add_row(Var a, Var row) {
  const DenseArray& av = a.value();
  const DenseArray& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: cannot broadcast " + rv.shape_string() + " over " +
                         av.shape_string());
  }
  DenseArray out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) dst[c] += rv[c];
  }
  return a.graph().record(std::move(out), {a, row},
                          [a, row](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (g.wants_grad(a)) {
                              DenseArray& ga = g.grad_buffer(a);
                              for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
                            }
                            if (g.wants_grad(row)) {
                              view(g.grad_buffer(row)).noalias() +=
                                  view(gy).colwise().sum();
                            }
                          });
}

Var sum_all(Var a) {
  require_nonempty("sum_all", a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(DenseArray::scalar(s), {a},
                          [a](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            const double d = gy[0];
                            for (double& v : ga.data()) v += d;
                          });
}

Var mean_all(Var a) {
  require_nonempty("mean_all", a);
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(DenseArray::scalar(s / n), {a},
                          [a, n](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            const double d = gy[0] / n;
                            for (double& v : ga.data()) v += d;
                          });
}

Var sum_rows(Var a) {
  require_nonempty("sum_rows", a);
  const DenseArray& av = a.value();
  DenseArray out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v;
    out[r] = s;
  }
  return a.graph().record(std::move(out), {a},
                          [a](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            for (std::size_t r = 0; r < ga.rows(); ++r) {
                              for (double& v : ga.row(r)) v += gy[r];
                            }
                          });
}

Var log_sum_exp_all(Var a) {
  require_nonempty("log_sum_exp_all", a);
  const DenseArray& av = a.value();
  const double m = *std::max_element(av.data().begin(), av.data().end());
  double s = 0.0;
  for (double v : av.data()) s += std::exp(v - m);
  const double result = m + std::log(s);
  return a.graph().record(DenseArray::scalar(result), {a},
                          [a](Graph& g, const DenseArray& y, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            const DenseArray& av = a.value();
                            for (std::size_t i = 0; i < av.size(); ++i) {
                              ga[i] += gy[0] * std::exp(av[i] - y[0]);
                            }
                          });
}

Var log_softmax_rows(Var a) {
  require_nonempty("log_softmax_rows", a);
  const DenseArray& av = a.value();
  DenseArray out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto x = av.row(r);
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    const double lse = m + std::log(s);
    auto y = out.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) y[c] = x[c] - lse;
  }
  return a.graph().record(std::move(out), {a},
                          [a](Graph& g, const DenseArray& y, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            for (std::size_t r = 0; r < y.rows(); ++r) {
                              double total = 0.0;
                              for (double v : gy.row(r)) total += v;
                              auto yr = y.row(r);
                              auto gr = gy.row(r);
                              auto dst = ga.row(r);
                              for (std::size_t c = 0; c < yr.size(); ++c) {
                                dst[c] += gr[c] - std::exp(yr[c]) * total;
                              }
                            }
                          });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const DenseArray& av = a.value();
  if (begin + count > av.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         av.shape_string());
  }
  DenseArray out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::memcpy(out.row(r).data(), av.row(r).data() + begin, count * sizeof(double));
  }
  return a.graph().record(std::move(out), {a},
                          [a, begin](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            for (std::size_t r = 0; r < gy.rows(); ++r) {
                              auto src = gy.row(r);
                              auto dst = ga.row(r);
                              for (std::size_t c = 0; c < src.size(); ++c) {
                                dst[begin + c] += src[c];
                              }
                            }
                          });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const DenseArray& av = a.value();
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         av.shape_string());
  }
  std::vector<double> data(av.data().begin() + begin * av.cols(),
                           av.data().begin() + (begin + count) * av.cols());
  DenseArray out(count, av.cols(), std::move(data));
  return a.graph().record(std::move(out), {a},
                          [a, begin](Graph& g, const DenseArray&, const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            const std::size_t offset = begin * ga.cols();
                            for (std::size_t i = 0; i < gy.size(); ++i) ga[offset + i] += gy[i];
                          });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  DenseArray out = imvae::gather_rows(a.value(), indices);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.graph().record(std::move(out), {a},
                          [a, idx = std::move(idx)](Graph& g, const DenseArray&,
                                                    const DenseArray& gy) {
                            if (!g.wants_grad(a)) return;
                            DenseArray& ga = g.grad_buffer(a);
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                              auto src = gy.row(i);
                              auto dst = ga.row(idx[i]);
                              for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                            }
                          });
}

Var concat_cols(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row mismatch " + av.shape_string() + " vs " +
                         bv.shape_string());
  }
  DenseArray out(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::memcpy(out.row(r).data(), av.row(r).data(), av.cols() * sizeof(double));
    std::memcpy(out.row(r).data() + av.cols(), bv.row(r).data(), bv.cols() * sizeof(double));
  }
  const std::size_t split = av.cols();
  return a.graph().record(std::move(out), {a, b},
                          [a, b, split](Graph& g, const DenseArray&, const DenseArray& gy) {
                            const bool wa = g.wants_grad(a);
                            const bool wb = g.wants_grad(b);
                            for (std::size_t r = 0; r < gy.rows(); ++r) {
                              auto src = gy.row(r);
                              if (wa) {
                                auto dst = g.grad_buffer(a).row(r);
                                for (std::size_t c = 0; c < split; ++c) dst[c] += src[c];
                              }
                              if (wb) {
                                auto dst = g.grad_buffer(b).row(r);
                                for (std::size_t c = split; c < src.size(); ++c) {
                                  dst[c - split] += src[c];
                                }
                              }
                            }
                          });
}

Var pairwise_sq_dist(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("pairwise_sq_dist: width mismatch " + av.shape_string() + " vs " +
                         bv.shape_string());
  }
  DenseArray out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto ai = av.row(i);
    for (std::size_t j = 0; j < bv.rows(); ++j) {
      auto bj = bv.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < ai.size(); ++k) {
        const double d = ai[k] - bj[k];
        s += d * d;
      }
      out(i, j) = s;
    }
  }
  return a.graph().record(
      std::move(out), {a, b}, [a, b](Graph& g, const DenseArray&, const DenseArray& gy) {
        const DenseArray& av = a.value();
        const DenseArray& bv = b.value();
        DenseArray* ga = g.wants_grad(a) ? &g.grad_buffer(a) : nullptr;
        DenseArray* gb = g.wants_grad(b) ? &g.grad_buffer(b) : nullptr;
        for (std::size_t i = 0; i < av.rows(); ++i) {
          auto ai = av.row(i);
          for (std::size_t j = 0; j < bv.rows(); ++j) {
            const double w = 2.0 * gy(i, j);
            if (w == 0.0) continue;
            auto bj = bv.row(j);
            for (std::size_t k = 0; k < ai.size(); ++k) {
              const double d = w * (ai[k] - bj[k]);
              if (ga != nullptr) (*ga)(i, k) += d;
              if (gb != nullptr) (*gb)(j, k) -= d;
            }
          }
        }
      });
}

Var elementwise(UnaryOp op, Var a) {
  switch (op) {
    case UnaryOp::exp: return exp(a);
    case UnaryOp::log: return log(a);
    case UnaryOp::negate: return negate(a);
    case UnaryOp::sigmoid: return sigmoid(a);
    case UnaryOp::leaky_relu: return leaky_relu(a, 0.2);
    case UnaryOp::relu: return relu(a);
    case UnaryOp::square: return square(a);
  }
  throw ContractError("elementwise: unknown unary op");
}

Var elementwise(BinaryOp op, Var a, Var b) {
  switch (op) {
    case BinaryOp::add: return add(a, b);
    case BinaryOp::sub: return sub(a, b);
    case BinaryOp::mul: return mul(a, b);
  }
  throw ContractError("elementwise: unknown binary op");
}

Var reduce(ReduceOp op, Var a) {
  switch (op) {
    case ReduceOp::sum_all: return sum_all(a);
    case ReduceOp::mean_all: return mean_all(a);
    case ReduceOp::sum_rows: return sum_rows(a);
    case ReduceOp::log_sum_exp_all: return log_sum_exp_all(a);
  }
  throw ContractError("reduce: unknown op");
}

}  // namespace imvae::diff
