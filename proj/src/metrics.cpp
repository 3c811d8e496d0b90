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

#include "imvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "imvae/adam.hpp"
#include "imvae/errors.hpp"
#include "imvae/objectives.hpp"
#include "imvae/rng.hpp"

namespace imvae {

using diff::Graph;
using diff::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

DenseArray row_block(const DenseArray& a, std::size_t begin, std::size_t count) {
  DenseArray out(count, a.cols());
  std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()), count * a.cols(),
              out.data().begin());
  return out;
}

// mean + exp(log_var / 2) * noise, or mean alone when log_var is empty.
DenseArray sample_codes(const DenseArray& mean, const DenseArray& log_var,
                        std::span<const std::size_t> rows, Rng& rng) {
  DenseArray z = gather_rows(mean, rows);
  if (log_var.empty()) return z;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < z.cols(); ++c) {
      z(r, c) += std::exp(0.5 * log_var(rows[r], c)) * rng.normal();
    }
  }
  return z;
}

}  // namespace

PosteriorTable posterior_table(const Encoder& encoder, const DenseArray& x, std::size_t chunk) {
  if (chunk == 0) throw ContractError("posterior_table: chunk must be positive");
  PosteriorTable out{DenseArray(x.rows(), encoder.z_dim), DenseArray(x.rows(), encoder.z_dim)};
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t n = std::min(chunk, x.rows() - begin);
    Graph g;
    GaussianPosterior post = encode(g, encoder, g.constant(row_block(x, begin, n)));
    const auto& m = post.mean.value().data();
    const auto& lv = post.log_var.value().data();
    std::copy(m.begin(), m.end(), out.mean.data().begin() + static_cast<std::ptrdiff_t>(begin * encoder.z_dim));
    std::copy(lv.begin(), lv.end(), out.log_var.data().begin() + static_cast<std::ptrdiff_t>(begin * encoder.z_dim));
  }
  return out;
}

// ---------------------------------------------------------------------------

MiEstimate estimate_mi(const DenseArray& x, const DenseArray& mean, const DenseArray& log_var,
                       const MiEstimatorConfig& config) {
  const std::size_t n = x.rows();
  if (mean.rows() != n || (!log_var.empty() && !log_var.same_shape(mean))) {
    throw DimensionError("estimate_mi: x " + x.shape_string() + ", mean " + mean.shape_string() +
                         ", log_var " + log_var.shape_string());
  }
  if (n < 2) throw ContractError("estimate_mi needs at least 2 data points");
  if (config.window == 0 || config.window > config.steps) {
    throw ContractError("estimate_mi: window must be in [1, steps]");
  }
  const std::size_t b = std::min(config.batch, n);

  Critic critic = init_critic(x.cols(), mean.cols(), config.hidden, config.seed);
  std::vector<diff::Parameter*> params;
  for (Linear& l : critic.layers) {
    params.push_back(&l.weight);
    params.push_back(&l.bias);
  }
  Adam adam(params, config.learning_rate);
  BatchIterator batches(n, b, splitmix64(config.seed ^ 0x6d69ULL));
  Rng noise = Rng::stream(config.seed, 11);
  Rng perm_rng = Rng::stream(config.seed, 12);

  // Weights of the matched and mismatched pairs in the marginal average.
  const double inv_n = 1.0 / static_cast<double>(n);
  DenseArray log_weights(b, 2);
  for (std::size_t r = 0; r < b; ++r) {
    log_weights(r, 0) = std::log(inv_n);
    log_weights(r, 1) = std::log1p(-inv_n);
  }
  const double log_b = std::log(static_cast<double>(b));

  MiEstimate out;
  out.trace.reserve(config.steps);
  const std::size_t window_start = config.steps - config.window;
  double ema = 0.0;
  double ema_sq = 0.0;
  double weight = 0.0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto rows = batches.next();
    DenseArray xb = gather_rows(x, rows);
    DenseArray zb = sample_codes(mean, log_var, rows, noise);
    const Permutation perm = random_derangement(perm_rng, b);
    DenseArray zt = gather_rows(zb, perm.indices());

    Graph g;
    CriticScores s = critic_score_pair(g, critic, g.constant(std::move(xb)),
                                       g.constant(std::move(zb)), g.constant(std::move(zt)));
    Var tj = diff::clamp(s.joint, -kScoreClamp, kScoreClamp);
    Var tm = diff::clamp(s.marginal, -kScoreClamp, kScoreClamp);
    Var pooled = diff::add(diff::concat_cols(tj, tm), g.constant(log_weights));
    Var log_partition = diff::add_scalar(diff::log_sum_exp_all(pooled), -log_b);
    Var bound = diff::sub(diff::mean_all(tj), log_partition);
    const double value = bound.value().item();
    if (!std::isfinite(value)) throw NumericError("estimate_mi: non-finite bound at step " + std::to_string(step));
    out.trace.push_back(value);

    g.backward(diff::negate(bound), params);
    adam.step();
    adam.zero_grad();

    if (step >= window_start) {
      const double d = config.ema_decay;
      ema = d * ema + (1.0 - d) * value;
      weight = d * weight + (1.0 - d);
      const double dev = value - ema / weight;
      ema_sq = d * ema_sq + (1.0 - d) * dev * dev;
    }
  }
  out.nats = ema / weight;
  out.ema_variance = ema_sq / weight;
  out.converged = out.ema_variance <= config.variance_threshold;
  return out;
}

MiEstimate estimate_mi(const Encoder& encoder, const DenseArray& x,
                       const MiEstimatorConfig& config) {
  PosteriorTable post = posterior_table(encoder, x);
  return estimate_mi(x, post.mean, post.log_var, config);
}

// ---------------------------------------------------------------------------

std::vector<double> column_variances(const DenseArray& values) {
  std::vector<double> mean(values.cols(), 0.0);
  std::vector<double> m2(values.cols(), 0.0);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    const double count = static_cast<double>(r + 1);
    for (std::size_t c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      const double delta = v - mean[c];
      mean[c] += delta / count;
      m2[c] += delta * (v - mean[c]);
    }
  }
  if (values.rows() > 0) {
    for (double& v : m2) v /= static_cast<double>(values.rows());
  }
  return m2;
}

std::size_t active_units(const DenseArray& posterior_means, double epsilon) {
  if (posterior_means.rows() == 0) throw ContractError("active_units: empty dataset");
  const auto var = column_variances(posterior_means);
  return static_cast<std::size_t>(
      std::count_if(var.begin(), var.end(), [&](double v) { return v >= epsilon; }));
}

std::size_t active_units(const Encoder& encoder, const DenseArray& x, double epsilon) {
  return active_units(posterior_table(encoder, x).mean, epsilon);
}

double kl_term(const PosteriorTable& posterior) {
  const std::size_t n = posterior.mean.rows();
  if (n == 0) throw ContractError("kl_term: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < posterior.mean.size(); ++i) {
    const double mu = posterior.mean[i];
    const double lv = posterior.log_var[i];
    total += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  return total / static_cast<double>(n);
}

double kl_term(const Encoder& encoder, const DenseArray& x) {
  return kl_term(posterior_table(encoder, x));
}

// ---------------------------------------------------------------------------

double importance_weighted_bound(std::span<const double> log_joint,
                                 std::span<const double> log_proposal) {
  if (log_joint.size() != log_proposal.size() || log_joint.empty()) {
    throw DimensionError("importance_weighted_bound: " + std::to_string(log_joint.size()) +
                         " joint vs " + std::to_string(log_proposal.size()) + " proposal values");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_joint.size(); ++i) mx = std::max(mx, log_joint[i] - log_proposal[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < log_joint.size(); ++i) s += std::exp(log_joint[i] - log_proposal[i] - mx);
  return mx + std::log(s / static_cast<double>(log_joint.size()));
}

LogLikelihood log_likelihood(const Model& model, const DenseArray& x, std::size_t k,
                             std::uint64_t seed, std::size_t chunk) {
  if (k == 0) throw ContractError("log_likelihood: k must be >= 1");
  if (chunk == 0) throw ContractError("log_likelihood: chunk must be positive");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const std::size_t d = model.encoder.z_dim;
  Rng rng = Rng::stream(seed, 21);
  LogLikelihood out;
  out.per_example.resize(x.rows());
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t n = std::min(chunk, x.rows() - begin);
    Graph g;
    Var xb = g.constant(row_block(x, begin, n));
    GaussianPosterior post = encode(g, model.encoder, xb);
    if (k == 1) {
      Var z = reparameterize(post, g.constant(rng.normal_array(n, d)));
      Var recon = bernoulli_log_likelihood(xb, decode(g, model.decoder, z));
      Var kl = kl_per_example(post);
      for (std::size_t i = 0; i < n; ++i) {
        out.per_example[begin + i] = recon.value()[i] - kl.value()[i];
      }
      continue;
    }
    std::vector<std::vector<double>> log_joint(n, std::vector<double>(k));
    std::vector<std::vector<double>> log_q(n, std::vector<double>(k));
    const DenseArray& lv = post.log_var.value();
    for (std::size_t s = 0; s < k; ++s) {
      DenseArray eps = rng.normal_array(n, d);
      Var z = reparameterize(post, g.constant(eps));
      Var recon = bernoulli_log_likelihood(xb, decode(g, model.decoder, z));
      const DenseArray& zv = z.value();
      for (std::size_t i = 0; i < n; ++i) {
        double log_prior = 0.0;
        double log_post = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          log_prior += -0.5 * (log_2pi + zv(i, c) * zv(i, c));
          log_post += -0.5 * (log_2pi + lv(i, c) + eps(i, c) * eps(i, c));
        }
        log_joint[i][s] = recon.value()[i] + log_prior;
        log_q[i][s] = log_post;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      out.per_example[begin + i] = importance_weighted_bound(log_joint[i], log_q[i]);
    }
  }
  out.mean = x.rows() == 0 ? kNaN
                           : std::accumulate(out.per_example.begin(), out.per_example.end(), 0.0) /
                                 static_cast<double>(x.rows());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Linear probe_layer(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseArray w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return Linear{diff::Parameter(name + ".weight", std::move(w)),
                diff::Parameter(name + ".bias", DenseArray(1, fan_out))};
}

template <class LayersT>
Var probe_logits(Graph& g, LayersT& layers, Var h) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = diff::add_row(diff::matmul(h, g.param(layers[i].weight)), g.param(layers[i].bias));
    if (i + 1 < layers.size()) h = diff::relu(h);
  }
  return h;
}

}  // namespace

double probe_accuracy(const DenseArray& train_features, std::span<const int> train_labels,
                      const DenseArray& test_features, std::span<const int> test_labels,
                      const ProbeConfig& config) {
  if (train_features.rows() != train_labels.size() || test_features.rows() != test_labels.size() ||
      train_features.cols() != test_features.cols()) {
    throw DimensionError("probe_accuracy: features/labels disagree (train " +
                         train_features.shape_string() + " with " +
                         std::to_string(train_labels.size()) + " labels, test " +
                         test_features.shape_string() + " with " +
                         std::to_string(test_labels.size()) + " labels)");
  }
  if (train_features.rows() < 2 || test_features.rows() == 0) {
    throw ContractError("probe_accuracy: need at least 2 training and 1 test example");
  }
  const std::set<int> train_classes(train_labels.begin(), train_labels.end());
  for (int label : test_labels) {
    if (label < 0) throw ContractError("probe_accuracy: negative label " + std::to_string(label));
    if (!train_classes.contains(label)) {
      throw ContractError("probe_accuracy: class " + std::to_string(label) +
                          " appears in the test split but not in training");
    }
  }
  const std::size_t classes = static_cast<std::size_t>(*train_classes.rbegin()) + 1;
  const std::size_t dim = train_features.cols();

  std::vector<double> shift(dim, 0.0);
  std::vector<double> inv_scale(dim, 1.0);
  if (config.standardize) {
    const auto var = column_variances(train_features);
    for (std::size_t c = 0; c < dim; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < train_features.rows(); ++r) m += train_features(r, c);
      shift[c] = m / static_cast<double>(train_features.rows());
      inv_scale[c] = var[c] > 1e-12 ? 1.0 / std::sqrt(var[c]) : 1.0;
    }
  }
  auto standardize = [&](const DenseArray& f) {
    DenseArray out = f;
    for (std::size_t r = 0; r < f.rows(); ++r) {
      for (std::size_t c = 0; c < dim; ++c) out(r, c) = (f(r, c) - shift[c]) * inv_scale[c];
    }
    return out;
  };
  const DenseArray train_x = standardize(train_features);
  const DenseArray test_x = standardize(test_features);

  Rng init = Rng::stream(config.seed, 31);
  std::vector<Linear> layers;
  std::size_t width = dim;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    layers.push_back(probe_layer("probe." + std::to_string(i), width, config.hidden[i], init));
    width = config.hidden[i];
  }
  layers.push_back(probe_layer("probe.out", width, classes, init));
  // The output bias starts at the smoothed log class frequencies so an
  // untrained probe predicts the majority class. Softmax regression is
  // convex, so the linear probe also starts from zero weights.
  std::vector<double> counts(classes, 1.0);
  for (int label : train_labels) counts[static_cast<std::size_t>(label)] += 1.0;
  const double total = static_cast<double>(train_labels.size() + classes);
  for (std::size_t c = 0; c < classes; ++c) {
    layers.back().bias.value[c] = std::log(counts[c] / total);
  }
  if (config.hidden.empty()) layers.back().weight.value.fill(0.0);
  std::vector<diff::Parameter*> params;
  for (Linear& l : layers) {
    params.push_back(&l.weight);
    params.push_back(&l.bias);
  }
  Adam adam(params, config.learning_rate);

  const std::size_t b = std::min(config.batch, train_x.rows());
  BatchIterator batches(train_x.rows(), b, splitmix64(config.seed ^ 0x7072ULL));
  const std::size_t steps = config.epochs * batches.batches_per_epoch();
  for (std::size_t step = 0; step < steps; ++step) {
    const auto rows = batches.next();
    DenseArray onehot(b, classes);
    for (std::size_t r = 0; r < b; ++r) onehot(r, static_cast<std::size_t>(train_labels[rows[r]])) = 1.0;
    Graph g;
    Var logits = probe_logits(g, layers, g.constant(gather_rows(train_x, rows)));
    Var nll = diff::scale(diff::sum_all(diff::mul(g.constant(std::move(onehot)),
                                                  diff::log_softmax_rows(logits))),
                          -1.0 / static_cast<double>(b));
    g.backward(nll, params);
    adam.step();
    adam.zero_grad();
  }

  Graph g;
  const std::vector<Linear>& frozen = layers;
  Var logits = probe_logits(g, frozen, g.constant(test_x));
  const DenseArray& lv = logits.value();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const auto row = lv.row(r);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == test_labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(lv.rows());
}

double probe_accuracy(const Encoder& encoder, const Dataset& train, const Dataset& test,
                      const ProbeConfig& config) {
  if (!train.labeled() || !test.labeled()) {
    throw ContractError("probe_accuracy: both splits need labels");
  }
  return probe_accuracy(posterior_table(encoder, train.examples).mean, *train.labels,
                        posterior_table(encoder, test.examples).mean, *test.labels, config);
}

// ---------------------------------------------------------------------------

MetricSelection MetricSelection::parse(const std::string& list) {
  if (list == "all") return {};
  MetricSelection s = none();
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "mi") s.mi = true;
    else if (item == "kl") s.kl = true;
    else if (item == "au") s.au = true;
    else if (item == "elbo") s.elbo = true;
    else if (item == "probe") s.probe = true;
    else if (item == "all") s = {};
    else if (!item.empty()) throw ConfigError("unknown metric '" + item + "' (expected mi, kl, au, elbo, probe)");
  }
  return s;
}

std::string MetricSelection::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  add(mi, "mi");
  add(kl, "kl");
  add(au, "au");
  add(elbo, "elbo");
  add(probe, "probe");
  return out;
}

MetricsRecord evaluate(const Model& model, const Dataset& eval, const Dataset& probe_train,
                       const EvalConfig& config, std::size_t step) {
  MetricsRecord rec{step, kNaN, kNaN, -1, kNaN, kNaN, true};
  const MetricSelection& w = config.which;
  PosteriorTable post;
  if (w.kl || w.au || w.mi) post = posterior_table(model.encoder, eval.examples);
  if (w.kl) rec.kl = kl_term(post);
  if (w.au) rec.active_units = static_cast<long>(active_units(post.mean, config.au_epsilon));
  if (w.elbo) rec.elbo = log_likelihood(model, eval.examples, config.ll_samples, config.seed).mean;
  if (w.mi) {
    MiEstimatorConfig mi = config.mi;
    mi.seed = splitmix64(config.seed ^ mi.seed);
    MiEstimate est = estimate_mi(eval.examples, post.mean, post.log_var, mi);
    rec.mi = est.nats;
    rec.mi_converged = est.converged;
  }
  if (w.probe && eval.labeled() && probe_train.labeled()) {
    ProbeConfig probe = config.probe;
    probe.seed = splitmix64(config.seed ^ probe.seed);
    rec.probe_accuracy = probe_accuracy(model.encoder, probe_train, eval, probe);
  }
  return rec;
}

std::string metrics_csv_row(const MetricsRecord& r) {
  auto real = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string out = std::to_string(r.step) + "," + real(r.mi) + "," + real(r.kl) + ",";
  out += r.active_units < 0 ? std::string("nan") : std::to_string(r.active_units);
  out += "," + real(r.elbo) + "," + real(r.probe_accuracy);
  return out;
}

MetricsRecord parse_metrics_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (cells.size() != 6) {
    throw FormatError("metrics row has " + std::to_string(cells.size()) + " fields: " + line);
  }
  auto real = [&](const std::string& s) { return s == "nan" ? kNaN : std::stod(s); };
  MetricsRecord r;
  r.step = std::stoul(cells[0]);
  r.mi = real(cells[1]);
  r.kl = real(cells[2]);
  r.active_units = cells[3] == "nan" ? -1 : std::stol(cells[3]);
  r.elbo = real(cells[4]);
  r.probe_accuracy = real(cells[5]);
  return r;
}

}  // namespace imvae
