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

// Evaluation of frozen models: neural MI estimation with a fresh critic,
// active units, the KL regulariser, ELBO / importance-weighted
// log-likelihood and classification probes on posterior means.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imvae/array.hpp"
#include "imvae/data.hpp"
#include "imvae/models.hpp"

namespace imvae {

struct PosteriorTable {
  DenseArray mean;     ///< n x z_dim
  DenseArray log_var;  ///< n x z_dim
};

/// Runs the frozen encoder over `x` in chunks of `chunk` rows.
PosteriorTable posterior_table(const Encoder& encoder, const DenseArray& x,
                               std::size_t chunk = 512);

// ---------------------------------------------------------------------------
// Mutual information.

struct MiEstimatorConfig {
  std::size_t steps = 3000;
  std::size_t window = 500;  ///< final steps averaged by the EMA
  double ema_decay = 0.99;
  std::size_t batch = 256;
  std::size_t hidden = 128;
  double learning_rate = 5e-4;
  std::uint64_t seed = 0;
  /// Estimates whose EMA variance exceeds this are flagged as unconverged.
  double variance_threshold = 0.25;
};

struct MiEstimate {
  double nats = 0.0;          ///< bias-corrected EMA over the final window
  double ema_variance = 0.0;  ///< EMA of squared deviation over the window
  bool converged = true;
  std::vector<double> trace;  ///< per-step batch bound, all steps
};

/// Trains a fresh critic on pairs (x_i, z_i) with the Donsker-Varadhan bound
/// and returns its smoothed value. z_i = mean_i + exp(log_var_i / 2) * noise
/// with fresh noise each step; pass an empty `log_var` for deterministic
/// codes.
///
/// Batches hold distinct dataset rows and negatives pair x_i with z of
/// another row of the batch. The marginal average also gives weight 1/N to
/// the matched pair, which is the chance that a draw from the aggregate
/// posterior of an N-point dataset came from x_i itself; with it every batch
/// bound is at most log N.
MiEstimate estimate_mi(const DenseArray& x, const DenseArray& mean, const DenseArray& log_var,
                       const MiEstimatorConfig& config);

/// Same, with (mean, log_var) from the frozen encoder.
MiEstimate estimate_mi(const Encoder& encoder, const DenseArray& x,
                       const MiEstimatorConfig& config);

// ---------------------------------------------------------------------------
// Latent usage.

inline constexpr double kActiveUnitEpsilon = 0.05;

/// Population variance over rows of each column (Welford).
std::vector<double> column_variances(const DenseArray& values);

/// Number of latent dimensions whose posterior mean varies across `x` with
/// variance >= epsilon.
std::size_t active_units(const Encoder& encoder, const DenseArray& x,
                         double epsilon = kActiveUnitEpsilon);
std::size_t active_units(const DenseArray& posterior_means, double epsilon = kActiveUnitEpsilon);

/// Dataset mean of the analytic KL(q(z|x) || N(0, I)).
double kl_term(const Encoder& encoder, const DenseArray& x);
double kl_term(const PosteriorTable& posterior);

// ---------------------------------------------------------------------------
// Likelihood.

/// log mean exp(log_joint - log_proposal): the importance-weighted bound
/// from k proposal draws.
double importance_weighted_bound(std::span<const double> log_joint,
                                 std::span<const double> log_proposal);

struct LogLikelihood {
  double mean = 0.0;
  std::vector<double> per_example;
};

/// k = 1: single-sample ELBO (Bernoulli reconstruction of one draw minus
/// the analytic KL). k > 1: importance-weighted bound with k draws from
/// q(z|x). ContractError for k = 0.
LogLikelihood log_likelihood(const Model& model, const DenseArray& x, std::size_t k,
                             std::uint64_t seed, std::size_t chunk = 256);

// ---------------------------------------------------------------------------
// Probes.

struct ProbeConfig {
  /// Empty for a linear (softmax regression) probe; {128, 64} for the MLP.
  std::vector<std::size_t> hidden;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  /// Standardize features with training-split statistics.
  bool standardize = true;
};

/// Trains on (train_features, train_labels) and returns accuracy on the test
/// split. ContractError if a test class is missing from the training split.
double probe_accuracy(const DenseArray& train_features, std::span<const int> train_labels,
                      const DenseArray& test_features, std::span<const int> test_labels,
                      const ProbeConfig& config);

/// Probe on posterior means of the frozen encoder. Both splits need labels.
double probe_accuracy(const Encoder& encoder, const Dataset& train, const Dataset& test,
                      const ProbeConfig& config);

// ---------------------------------------------------------------------------
// Records.

struct MetricSelection {
  bool mi = true;
  bool kl = true;
  bool au = true;
  bool elbo = true;
  bool probe = true;

  static MetricSelection none() { return {false, false, false, false, false}; }
  /// Comma-separated subset of mi,kl,au,elbo,probe, or "all".
  static MetricSelection parse(const std::string& list);
  std::string to_string() const;
};

struct EvalConfig {
  MetricSelection which;
  MiEstimatorConfig mi;
  ProbeConfig probe;
  double au_epsilon = kActiveUnitEpsilon;
  std::size_t ll_samples = 1;
  std::uint64_t seed = 0;
};

/// Unselected or unavailable values are NaN (active_units = -1).
struct MetricsRecord {
  std::size_t step = 0;
  double mi = 0.0;
  double kl = 0.0;
  long active_units = 0;
  double elbo = 0.0;
  double probe_accuracy = 0.0;
  bool mi_converged = true;
};

/// Metrics on `eval`; the probe trains on `probe_train` (skipped when either
/// split is unlabeled).
MetricsRecord evaluate(const Model& model, const Dataset& eval, const Dataset& probe_train,
                       const EvalConfig& config, std::size_t step);

inline constexpr const char* kMetricsCsvHeader = "step,mi,kl,au,elbo,probe_acc";
/// One CSV row, reals with 6 decimals, "nan" for missing values.
std::string metrics_csv_row(const MetricsRecord& record);
MetricsRecord parse_metrics_csv_row(const std::string& line);

}  // namespace imvae
