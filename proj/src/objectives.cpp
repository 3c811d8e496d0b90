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

#include "imvae/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "eigen_view.hpp"
#include "imvae/errors.hpp"

namespace imvae {

using diff::Var;

namespace {

void require_finite(const char* term, Var v) {
  if (!v.value().all_finite()) {
    throw NumericError(std::string("non-finite ") + term + " (" + v.value().shape_string() +
                       ")");
  }
}

}  // namespace

Var bernoulli_log_likelihood(Var x, Var reconstruction) {
  if (!x.value().same_shape(reconstruction.value())) {
    throw DimensionError("bernoulli_log_likelihood: x " + x.value().shape_string() +
                         " vs reconstruction " + reconstruction.value().shape_string());
  }
  // Fused: the per-pixel terms never become graph nodes. Outside the clamp
  // range the gradient is zero, matching clamp's subgradient.
  const auto xa = detail::view(x.value()).array();
  const auto pa = detail::view(reconstruction.value()).array().max(kProbClamp).min(1.0 - kProbClamp);
  DenseArray ll(x.rows(), 1);
  detail::view(ll) = (xa * pa.log() + (1.0 - xa) * (1.0 - pa).log()).rowwise().sum().matrix();
  return x.graph().record(
      std::move(ll), {x, reconstruction},
      [x, reconstruction](diff::Graph& g, const DenseArray&, const DenseArray& gy) {
        const auto xa = detail::view(x.value()).array();
        const auto ra = detail::view(reconstruction.value()).array();
        const auto pa = ra.max(kProbClamp).min(1.0 - kProbClamp);
        const auto gcol = detail::view(gy).array();
        if (g.wants_grad(reconstruction)) {
          const auto inside = (ra >= kProbClamp && ra <= 1.0 - kProbClamp);
          const auto d = xa / pa - (1.0 - xa) / (1.0 - pa);
          detail::view(g.grad_buffer(reconstruction)).array() +=
              inside.select(d, 0.0).colwise() * gcol.col(0);
        }
        if (g.wants_grad(x)) {
          detail::view(g.grad_buffer(x)).array() +=
              (pa.log() - (1.0 - pa).log()).colwise() * gcol.col(0);
        }
      });
}

Var kl_per_example(const GaussianPosterior& posterior) {
  Var mu2 = diff::square(posterior.mean);
  Var var = diff::exp(posterior.log_var);
  Var inner = diff::sub(diff::add_scalar(diff::add(mu2, var), -1.0), posterior.log_var);
  return diff::scale(diff::sum_rows(inner), 0.5);
}

ElboTerms elbo_terms(Var x, const GaussianPosterior& posterior, Var reconstruction) {
  if (posterior.mean.rows() != x.rows() || !posterior.mean.value().same_shape(posterior.log_var.value())) {
    throw DimensionError("elbo_terms: x " + x.value().shape_string() + ", mean " +
                         posterior.mean.value().shape_string() + ", log_var " +
                         posterior.log_var.value().shape_string());
  }
  ElboTerms t;
  t.recon_ll = diff::mean_all(bernoulli_log_likelihood(x, reconstruction));
  require_finite("reconstruction log-likelihood", t.recon_ll);
  t.kl = diff::mean_all(kl_per_example(posterior));
  require_finite("KL term", t.kl);
  return t;
}

// ---------------------------------------------------------------------------

Permutation::Permutation(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  std::vector<char> seen(indices_.size(), 0);
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    const std::size_t v = indices_[i];
    if (v >= indices_.size() || seen[v] != 0) {
      throw ContractError("permutation is not a bijection: entry " + std::to_string(i) + " = " +
                          std::to_string(v) + " for size " + std::to_string(indices_.size()));
    }
    seen[v] = 1;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return Permutation(std::move(idx));
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] != i) return false;
  }
  return true;
}

Permutation random_permutation(Rng& rng, std::size_t n, bool reject_identity) {
  std::vector<std::size_t> idx(n);
  while (true) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    Permutation p(idx);
    if (!reject_identity || n < 2 || !p.is_identity()) return p;
  }
}

Permutation random_derangement(Rng& rng, std::size_t n) {
  // Sattolo's algorithm: a uniformly random single n-cycle.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i - 1)]);
  }
  return Permutation(std::move(idx));
}

Var permute_codes(Var z, const Permutation& perm) {
  if (perm.size() != z.rows()) {
    throw DimensionError("permute_codes: permutation of size " + std::to_string(perm.size()) +
                         " for z " + z.value().shape_string());
  }
  return diff::gather_rows(z, perm.indices());
}

// ---------------------------------------------------------------------------

DivergenceSpec DivergenceSpec::kl_f_dual() {
  DivergenceSpec s;
  s.kind = DivergenceKind::kl_f_dual;
  s.name = "kl-f-dual";
  s.f = [](double u) { return u * std::log(u); };
  s.conjugate = [](Var t) { return diff::exp(diff::add_scalar(t, -1.0)); };
  return s;
}

DivergenceSpec DivergenceSpec::donsker_varadhan() {
  DivergenceSpec s;
  s.kind = DivergenceKind::donsker_varadhan;
  s.name = "dv";
  s.f = [](double u) { return u * std::log(u); };
  return s;
}

DivergenceSpec DivergenceSpec::generic(std::string name, std::function<double(double)> f,
                                       std::function<Var(Var)> conjugate) {
  if (!f || !conjugate) throw ContractError("divergence " + name + ": f and f* are required");
  const double at_one = f(1.0);
  if (!(std::abs(at_one) <= 1e-12)) {
    throw ContractError("divergence " + name + ": f(1) = " + std::to_string(at_one) +
                        ", expected 0");
  }
  for (int i = 1; i < 80; ++i) {
    const double a = 0.1 * i;
    const double b = a + 0.1 * (1 + i % 7);
    const double mid = f(0.5 * (a + b));
    if (mid > 0.5 * (f(a) + f(b)) + 1e-12) {
      throw ContractError("divergence " + name + ": f is not convex between " +
                          std::to_string(a) + " and " + std::to_string(b));
    }
  }
  DivergenceSpec s;
  s.kind = DivergenceKind::generic_f_dual;
  s.name = std::move(name);
  s.f = std::move(f);
  s.conjugate = std::move(conjugate);
  return s;
}

DivergenceSpec generic_kl() {
  return DivergenceSpec::generic(
      "kl-generic", [](double u) { return u * std::log(u); },
      [](Var t) { return diff::exp(diff::add_scalar(t, -1.0)); });
}

DivergenceSpec pearson_chi2() {
  return DivergenceSpec::generic(
      "pearson-chi2", [](double u) { return (u - 1.0) * (u - 1.0); },
      [](Var t) { return diff::add(t, diff::scale(diff::square(t), 0.25)); });
}

DivergenceSpec divergence_from_name(const std::string& name) {
  if (name == "kl-f-dual") return DivergenceSpec::kl_f_dual();
  if (name == "dv" || name == "donsker-varadhan") return DivergenceSpec::donsker_varadhan();
  throw ConfigError("unknown divergence '" + name + "' (expected kl-f-dual or dv)");
}

Var mi_lower_bound(const DivergenceSpec& spec, Var t_joint, Var t_marg) {
  if (t_joint.value().size() != t_marg.value().size() || t_joint.value().empty()) {
    throw DimensionError("mi_lower_bound: joint scores " + t_joint.value().shape_string() +
                         " vs marginal scores " + t_marg.value().shape_string());
  }
  Var tj = diff::clamp(t_joint, -kScoreClamp, kScoreClamp);
  Var tm = diff::clamp(t_marg, -kScoreClamp, kScoreClamp);
  Var joint_term = diff::mean_all(tj);
  Var marg_term;
  switch (spec.kind) {
    case DivergenceKind::donsker_varadhan: {
      const double log_n = std::log(static_cast<double>(tm.value().size()));
      marg_term = diff::add_scalar(diff::log_sum_exp_all(tm), -log_n);
      break;
    }
    case DivergenceKind::kl_f_dual:
    case DivergenceKind::generic_f_dual:
      if (!spec.conjugate) throw ContractError("divergence " + spec.name + " has no conjugate");
      marg_term = diff::mean_all(spec.conjugate(tm));
      break;
  }
  Var bound = diff::sub(joint_term, marg_term);
  require_finite("MI lower bound", bound);
  return bound;
}

// ---------------------------------------------------------------------------

void ObjectiveConfig::validate() const {
  std::string bad;
  if (!(alpha >= 0.0)) bad += " alpha=" + std::to_string(alpha);
  if (!(beta >= 0.0)) bad += " beta=" + std::to_string(beta);
  if (!(mmd_lambda >= 0.0)) bad += " mmd_lambda=" + std::to_string(mmd_lambda);
  for (double h : mmd_bandwidths) {
    if (!(h > 0.0)) bad += " mmd_bandwidth=" + std::to_string(h);
  }
  if (!bad.empty()) throw ContractError("invalid objective config:" + bad);
}

InfomaxLoss infomax_loss(const ObjectiveConfig& config, Var x, const GaussianPosterior& posterior,
                         Var reconstruction, const std::optional<CriticScores>& scores) {
  config.validate();
  if (!scores && config.alpha != 0.0) {
    throw ContractError("infomax_loss: alpha > 0 requires critic scores");
  }
  ElboTerms elbo = elbo_terms(x, posterior, reconstruction);
  InfomaxLoss out;
  out.recon_ll = elbo.recon_ll;
  out.kl = elbo.kl;
  Var objective = diff::sub(elbo.recon_ll, diff::scale(elbo.kl, config.beta));
  if (scores) {
    out.mi = mi_lower_bound(config.divergence, scores->joint, scores->marginal);
    out.critic_loss = diff::negate(out.mi);
    if (config.alpha != 0.0) objective = diff::add(objective, diff::scale(out.mi, config.alpha));
  }
  out.vae_loss = diff::negate(objective);
  require_finite("VAE loss", out.vae_loss);
  return out;
}

std::vector<double> default_mmd_bandwidths(std::size_t z_dim) {
  std::vector<double> h;
  for (int k = -2; k <= 2; ++k) h.push_back(static_cast<double>(z_dim) * std::ldexp(1.0, k));
  return h;
}

Var rbf_kernel(Var a, Var b, std::span<const double> bandwidths) {
  if (bandwidths.empty()) throw ContractError("rbf_kernel: no bandwidths");
  Var d = diff::pairwise_sq_dist(a, b);
  Var k;
  for (double h : bandwidths) {
    Var term = diff::exp(diff::scale(d, -1.0 / h));
    k = k.valid() ? diff::add(k, term) : term;
  }
  return k;
}

Var mmd2_unbiased(Var q, Var p, std::span<const double> bandwidths) {
  const double n = static_cast<double>(q.rows());
  const double m = static_cast<double>(p.rows());
  if (q.rows() < 2 || p.rows() < 2) {
    throw ContractError("unbiased MMD needs at least 2 samples per set, got " +
                        std::to_string(q.rows()) + " and " + std::to_string(p.rows()));
  }
  // k(u, u) = 1 per bandwidth, so each within-sample diagonal sums to
  // rows * |bandwidths|.
  const double diag = static_cast<double>(bandwidths.size());
  Var kqq = diff::add_scalar(diff::sum_all(rbf_kernel(q, q, bandwidths)), -n * diag);
  Var kpp = diff::add_scalar(diff::sum_all(rbf_kernel(p, p, bandwidths)), -m * diag);
  Var kqp = diff::sum_all(rbf_kernel(q, p, bandwidths));
  return diff::add(diff::add(diff::scale(kqq, 1.0 / (n * (n - 1.0))),
                             diff::scale(kpp, 1.0 / (m * (m - 1.0)))),
                   diff::scale(kqp, -2.0 / (n * m)));
}

Var mmd2_biased(Var q, Var p, std::span<const double> bandwidths) {
  Var kqq = diff::mean_all(rbf_kernel(q, q, bandwidths));
  Var kpp = diff::mean_all(rbf_kernel(p, p, bandwidths));
  Var kqp = diff::mean_all(rbf_kernel(q, p, bandwidths));
  return diff::add(diff::add(kqq, kpp), diff::scale(kqp, -2.0));
}

MmdLoss mmd_infovae_loss(const ObjectiveConfig& config, Var x, const GaussianPosterior& posterior,
                         Var z, Var reconstruction, Var prior_samples) {
  config.validate();
  if (prior_samples.rows() != z.rows()) {
    throw ContractError("mmd_infovae_loss: " + std::to_string(prior_samples.rows()) +
                        " prior samples for a batch of " + std::to_string(z.rows()));
  }
  const std::vector<double> bandwidths = config.mmd_bandwidths.empty()
                                             ? default_mmd_bandwidths(z.cols())
                                             : config.mmd_bandwidths;
  ElboTerms elbo = elbo_terms(x, posterior, reconstruction);
  MmdLoss out;
  out.recon_ll = elbo.recon_ll;
  out.kl = elbo.kl;
  out.mmd2 = mmd2_unbiased(z, prior_samples, bandwidths);
  Var loss = diff::negate(elbo.recon_ll);
  const double kl_weight = 1.0 - config.mmd_alpha;
  if (kl_weight != 0.0) loss = diff::add(loss, diff::scale(elbo.kl, kl_weight));
  const double mmd_weight = config.mmd_alpha + config.mmd_lambda - 1.0;
  if (mmd_weight != 0.0) loss = diff::add(loss, diff::scale(out.mmd2, mmd_weight));
  out.loss = loss;
  require_finite("MMD loss", out.loss);
  return out;
}

// ---------------------------------------------------------------------------

DecomposedKl decomposed_kl_terms(std::span<const double> kl_per_example, const DenseArray& mean,
                                 const DenseArray& log_var, const DenseArray& z,
                                 double mi_estimate) {
  const std::size_t n = mean.rows();
  const std::size_t d = mean.cols();
  if (n == 0 || !mean.same_shape(log_var) || z.cols() != d || z.rows() == 0 ||
      kl_per_example.size() != n) {
    throw DimensionError("decomposed_kl_terms: mean " + mean.shape_string() + ", log_var " +
                         log_var.shape_string() + ", z " + z.shape_string() + ", " +
                         std::to_string(kl_per_example.size()) + " KL values");
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  DecomposedKl out;
  for (double v : kl_per_example) out.kl_qzx_p += v;
  out.kl_qzx_p /= static_cast<double>(n);

  std::vector<double> log_comp(n);
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto zr = z.row(r);
    double log_prior = 0.0;
    for (std::size_t k = 0; k < d; ++k) log_prior += -0.5 * (log_2pi + zr[k] * zr[k]);
    for (std::size_t j = 0; j < n; ++j) {
      double lp = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = zr[k] - mean(j, k);
        lp += -0.5 * (log_2pi + log_var(j, k) + diff * diff * std::exp(-log_var(j, k)));
      }
      log_comp[j] = lp;
    }
    const double mx = *std::max_element(log_comp.begin(), log_comp.end());
    double s = 0.0;
    for (double v : log_comp) s += std::exp(v - mx);
    const double log_qz = mx + std::log(s / static_cast<double>(n));
    total += log_qz - log_prior;
  }
  out.kl_qz_p_estimate = total / static_cast<double>(z.rows());
  out.mi_identity_residual = out.kl_qzx_p - out.kl_qz_p_estimate - mi_estimate;
  return out;
}

}  // namespace imvae
