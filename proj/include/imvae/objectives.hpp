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

// Training objectives: ELBO, beta-weighted ELBO, the InfoMax objective with
// f-dual or Donsker-Varadhan mutual-information bounds, and the MMD
// (Info-VAE) baseline.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imvae/array.hpp"
#include "imvae/graph.hpp"
#include "imvae/models.hpp"
#include "imvae/rng.hpp"

namespace imvae {

/// Reconstructions are clamped to [kProbClamp, 1 - kProbClamp] before log.
inline constexpr double kProbClamp = 1e-7;
/// Critic scores are clipped to [-kScoreClamp, kScoreClamp] before any bound.
inline constexpr double kScoreClamp = 50.0;

struct ElboTerms {
  diff::Var recon_ll;  ///< batch mean of the Bernoulli log-likelihood
  diff::Var kl;        ///< batch mean of KL(q(z|x) || N(0, I))

  diff::Var elbo() const { return diff::sub(recon_ll, kl); }
};

/// Throws NumericError naming the term if either value is non-finite.
ElboTerms elbo_terms(diff::Var x, const GaussianPosterior& posterior, diff::Var reconstruction);

/// Per-row Bernoulli log-likelihood sum, r x 1.
diff::Var bernoulli_log_likelihood(diff::Var x, diff::Var reconstruction);
/// Per-row analytic KL to the standard normal, r x 1:
/// 0.5 * sum_d (mu^2 + exp(log_var) - 1 - log_var).
diff::Var kl_per_example(const GaussianPosterior& posterior);

// ---------------------------------------------------------------------------
// Batch permutations.

class Permutation {
 public:
  /// Throws ContractError unless `indices` is a bijection on {0..n-1}.
  explicit Permutation(std::vector<std::size_t> indices);
  static Permutation identity(std::size_t n);

  std::size_t size() const { return indices_.size(); }
  std::span<const std::size_t> indices() const { return indices_; }
  bool is_identity() const;

 private:
  std::vector<std::size_t> indices_;
};

/// Uniform random permutation of {0..n-1}. With `reject_identity` and n > 1,
/// redraws until the permutation moves at least one element.
Permutation random_permutation(Rng& rng, std::size_t n, bool reject_identity = true);
/// Uniform random cyclic permutation (no fixed points for n > 1).
Permutation random_derangement(Rng& rng, std::size_t n);

/// Row i of the result is row perm[i] of z. Gradients route back to z.
diff::Var permute_codes(diff::Var z, const Permutation& perm);

// ---------------------------------------------------------------------------
// Divergence bounds.

enum class DivergenceKind { kl_f_dual, generic_f_dual, donsker_varadhan };

struct DivergenceSpec {
  DivergenceKind kind = DivergenceKind::kl_f_dual;
  std::string name = "kl-f-dual";
  /// Generator f (generic kind only; used for validation and reporting).
  std::function<double(double)> f;
  /// Convex conjugate f*, applied elementwise to marginal scores.
  std::function<diff::Var(diff::Var)> conjugate;

  static DivergenceSpec kl_f_dual();
  static DivergenceSpec donsker_varadhan();
  /// Throws ContractError unless f(1) = 0 and f is midpoint-convex on a
  /// sample grid in (0, 8].
  static DivergenceSpec generic(std::string name, std::function<double(double)> f,
                                std::function<diff::Var(diff::Var)> conjugate);
};

/// f(u) = u log u with conjugate exp(t - 1), routed through the generic path.
DivergenceSpec generic_kl();
/// Pearson chi-squared: f(u) = (u - 1)^2, f*(t) = t + t^2 / 4.
DivergenceSpec pearson_chi2();

/// Parses "kl-f-dual" or "dv"/"donsker-varadhan"; ConfigError otherwise.
DivergenceSpec divergence_from_name(const std::string& name);

/// mean(t_joint) - mean(f*(t_marg)) for f-duals,
/// mean(t_joint) - log mean exp(t_marg) for Donsker-Varadhan. Scores are
/// clipped to +-kScoreClamp first. Throws DimensionError for unequal
/// lengths and NumericError for a non-finite result.
diff::Var mi_lower_bound(const DivergenceSpec& spec, diff::Var t_joint, diff::Var t_marg);

// ---------------------------------------------------------------------------
// Composite objectives.

struct ObjectiveConfig {
  double alpha = 10.0;
  double beta = 1.0;
  DivergenceSpec divergence = DivergenceSpec::kl_f_dual();
  /// Empty means default_mmd_bandwidths(z_dim).
  std::vector<double> mmd_bandwidths;
  double mmd_alpha = 0.0;
  double mmd_lambda = 1000.0;

  /// Throws ContractError for negative coefficients or bandwidths.
  void validate() const;
};

struct InfomaxLoss {
  diff::Var vae_loss;     ///< -(recon_ll - beta * kl + alpha * mi)
  diff::Var critic_loss;  ///< -mi (invalid when no scores were given)
  diff::Var recon_ll;
  diff::Var kl;
  diff::Var mi;           ///< invalid when no scores were given
};

/// With alpha = 0 the MI term is left out of vae_loss entirely, so alpha = 0,
/// beta = 1 reproduces -ELBO bit for bit. `scores` may be omitted only when
/// alpha = 0.
InfomaxLoss infomax_loss(const ObjectiveConfig& config, diff::Var x,
                         const GaussianPosterior& posterior, diff::Var reconstruction,
                         const std::optional<CriticScores>& scores);

/// Bandwidths {z_dim * 2^k : k = -2..2}.
std::vector<double> default_mmd_bandwidths(std::size_t z_dim);

/// sum_h exp(-||a_i - b_j||^2 / h), n x m.
diff::Var rbf_kernel(diff::Var a, diff::Var b, std::span<const double> bandwidths);
/// Unbiased MMD^2 (diagonal terms of the within-sample sums excluded).
/// ContractError if either sample has fewer than 2 rows.
diff::Var mmd2_unbiased(diff::Var q, diff::Var p, std::span<const double> bandwidths);
/// Biased (V-statistic) MMD^2; always >= 0.
diff::Var mmd2_biased(diff::Var q, diff::Var p, std::span<const double> bandwidths);

struct MmdLoss {
  diff::Var loss;  ///< -recon_ll + (1 - a) kl + (a + lambda - 1) MMD^2
  diff::Var recon_ll;
  diff::Var kl;
  diff::Var mmd2;
};

/// `prior_samples` must have as many rows as the batch (ContractError).
MmdLoss mmd_infovae_loss(const ObjectiveConfig& config, diff::Var x,
                         const GaussianPosterior& posterior, diff::Var z,
                         diff::Var reconstruction, diff::Var prior_samples);

// ---------------------------------------------------------------------------
// Diagnostics.

struct DecomposedKl {
  double kl_qzx_p = 0.0;           ///< mean KL(q(z|x) || p)
  double kl_qz_p_estimate = 0.0;   ///< Monte-Carlo KL(q(z) || p)
  double mi_identity_residual = 0.0;
};

/// Splits the KL regulariser into MI plus the aggregate-posterior KL.
/// q(z) is approximated by the mixture of the batch posteriors
/// (mean, log_var: n x d) and evaluated at `z`, whose row r must be a draw
/// from q(z | x_{r mod n}). residual = kl_qzx_p - kl_qz_p_estimate - mi_estimate.
DecomposedKl decomposed_kl_terms(std::span<const double> kl_per_example, const DenseArray& mean,
                                 const DenseArray& log_var, const DenseArray& z,
                                 double mi_estimate);

}  // namespace imvae
