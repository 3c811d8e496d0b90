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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "gradcheck.hpp"
#include "imvae/errors.hpp"
#include "imvae/objectives.hpp"

using namespace imvae;
using diff::Graph;
using diff::Parameter;
using diff::Var;
using imvae::testing::check_gradients;
using imvae::testing::uniform_array;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

GaussianPosterior constant_posterior(Graph& g, const DenseArray& mean, const DenseArray& log_var) {
  return {g.constant(mean), g.constant(log_var)};
}

// Monte-Carlo KL(N(mu, diag exp(lv)) || N(0, I)) from `samples` draws.
double monte_carlo_kl(const std::vector<double>& mu, const std::vector<double>& lv,
                      std::size_t samples, Rng& rng) {
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double log_ratio = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
      const double eps = rng.normal();
      const double z = mu[k] + std::exp(0.5 * lv[k]) * eps;
      const double log_q = -0.5 * (kLog2Pi + lv[k] + eps * eps);
      const double log_p = -0.5 * (kLog2Pi + z * z);
      log_ratio += log_q - log_p;
    }
    total += log_ratio;
  }
  return total / static_cast<double>(samples);
}

// Brute-force unbiased MMD^2 with a bandwidth-summed RBF kernel.
double mmd2_oracle(const DenseArray& q, const DenseArray& p, const std::vector<double>& hs) {
  auto k = [&](std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    double s = 0.0;
    for (double h : hs) s += std::exp(-d2 / h);
    return s;
  };
  const std::size_t n = q.rows();
  const std::size_t m = p.rows();
  double qq = 0.0, pp = 0.0, qp = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) qq += k(q.row(i), q.row(j));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) pp += k(p.row(i), p.row(j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) qp += k(q.row(i), p.row(j));
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return qq / (dn * (dn - 1)) + pp / (dm * (dm - 1)) - 2.0 * qp / (dn * dm);
}

}  // namespace

// ---------------------------------------------------------------------------
// ELBO terms

TEST_CASE("KL of simple posteriors") {
  Graph g;
  Var x = g.constant(DenseArray(2, 3, 0.5));
  Var recon = g.constant(DenseArray(2, 3, 0.5));
  SUBCASE("standard normal posterior") {
    const ElboTerms t = elbo_terms(x, constant_posterior(g, DenseArray(2, 4), DenseArray(2, 4)), recon);
    CHECK(t.kl.value().item() == 0.0);
  }
  SUBCASE("unit mean shift in one dimension") {
    const ElboTerms t =
        elbo_terms(x, constant_posterior(g, DenseArray(2, 1, 1.0), DenseArray(2, 1)), recon);
    CHECK(t.kl.value().item() == doctest::Approx(0.5));
  }
}

TEST_CASE("reconstruction log-likelihood") {
  Graph g;
  const GaussianPosterior post = constant_posterior(g, DenseArray(1, 1), DenseArray(1, 1));
  SUBCASE("half-probability pixels") {
    const ElboTerms t = elbo_terms(g.constant(DenseArray(1, 4, 1.0)), post,
                                   g.constant(DenseArray(1, 4, 0.5)));
    CHECK(t.recon_ll.value().item() == doctest::Approx(4.0 * std::log(0.5)));
  }
  SUBCASE("saturated reconstructions are clamped") {
    const ElboTerms t = elbo_terms(g.constant(DenseArray::from_rows({{1.0, 0.0}})), post,
                                   g.constant(DenseArray::from_rows({{0.0, 1.0}})));
    CHECK(t.recon_ll.value().item() == doctest::Approx(2.0 * std::log(kProbClamp)));
  }
  SUBCASE("batch mean of per-row sums") {
    Var x = g.constant(DenseArray::from_rows({{1, 0}, {0.5, 0.5}}));
    Var r = g.constant(DenseArray::from_rows({{0.9, 0.2}, {0.3, 0.6}}));
    const double row0 = std::log(0.9) + std::log(0.8);
    const double row1 = 0.5 * (std::log(0.3) + std::log(0.7)) + 0.5 * (std::log(0.6) + std::log(0.4));
    const DenseArray per = bernoulli_log_likelihood(x, r).value();
    CHECK(per[0] == doctest::Approx(row0));
    CHECK(per[1] == doctest::Approx(row1));
    const ElboTerms t = elbo_terms(x, constant_posterior(g, DenseArray(2, 1), DenseArray(2, 1)), r);
    CHECK(t.recon_ll.value().item() == doctest::Approx(0.5 * (row0 + row1)));
  }
}

TEST_CASE("Bernoulli log-likelihood gradients match finite differences") {
  Rng rng(1);
  Parameter x("x", uniform_array(rng, 3, 5, 0.0, 1.0));
  Parameter r("r", uniform_array(rng, 3, 5, 0.05, 0.95));
  const DenseArray weights = uniform_array(rng, 3, 1, -1, 1);
  auto fd = check_gradients({&x, &r}, [&](Graph& g) {
    Var w = g.constant(weights);
    return diff::sum_all(diff::mul(bernoulli_log_likelihood(g.param(x), g.param(r)), w));
  });
  CHECK(fd.max_rel_error < 1e-6);

  // Outside the clamp range the reconstruction receives no gradient.
  Parameter sat("sat", DenseArray::from_rows({{0.0, 1.0, 0.5}}));
  Graph g;
  g.backward(diff::sum_all(
      bernoulli_log_likelihood(g.constant(DenseArray::from_rows({{1, 0, 1}})), g.param(sat))));
  CHECK(sat.grad[0] == 0.0);
  CHECK(sat.grad[1] == 0.0);
  CHECK(sat.grad[2] == doctest::Approx(2.0));
}

TEST_CASE("analytic KL matches a Monte-Carlo oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 2 + rng.below(7);
    std::vector<double> mu(d), lv(d);
    for (std::size_t k = 0; k < d; ++k) {
      mu[k] = rng.uniform(-2.0, 2.0);
      lv[k] = rng.uniform(-2.0, 1.5);
    }
    Graph g;
    const double analytic =
        kl_per_example({g.constant(DenseArray(1, d, mu)), g.constant(DenseArray(1, d, lv))})
            .value()
            .item();
    const double mc = monte_carlo_kl(mu, lv, 100000, rng);
    CHECK(std::abs(mc - analytic) / analytic < 0.01);
  }
}

TEST_CASE("non-finite terms are reported by name") {
  Graph g;
  Var x = g.constant(DenseArray(1, 2, 0.5));
  Var r = g.constant(DenseArray(1, 2, 0.5));
  const GaussianPosterior bad = constant_posterior(g, DenseArray(1, 1), DenseArray(1, 1, 1e6));
  try {
    elbo_terms(x, bad, r);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("KL") != std::string::npos);
  }
  CHECK_THROWS_AS(elbo_terms(x, constant_posterior(g, DenseArray(2, 1), DenseArray(2, 1)), r),
                  DimensionError);
}

// ---------------------------------------------------------------------------
// Permutations

TEST_CASE("permutations of latent codes") {
  Graph g;
  const DenseArray z = DenseArray::from_rows({{1, 2}, {3, 4}, {5, 6}});
  Var zv = g.constant(z);
  CHECK(permute_codes(zv, Permutation::identity(3)).value() == z);
  CHECK(Permutation::identity(3).is_identity());

  Graph g2;
  const DenseArray swapped =
      permute_codes(g2.constant(DenseArray::from_rows({{1, 2}, {3, 4}})), Permutation({1, 0}))
          .value();
  CHECK(swapped == DenseArray::from_rows({{3, 4}, {1, 2}}));

  CHECK_THROWS_AS(Permutation({0, 0, 1}), ContractError);
  CHECK_THROWS_AS(Permutation({0, 3, 1}), ContractError);
}

TEST_CASE("random permutations preserve the multiset of rows") {
  Rng rng(5);
  const DenseArray z = rng.normal_array(64, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Permutation p = random_permutation(rng, 64);
    CHECK_FALSE(p.is_identity());
    Graph g;
    const DenseArray zt = permute_codes(g.constant(z), p).value();
    auto rows_sorted = [](const DenseArray& a) {
      std::vector<std::vector<double>> rows;
      for (std::size_t r = 0; r < a.rows(); ++r) rows.emplace_back(a.row(r).begin(), a.row(r).end());
      std::sort(rows.begin(), rows.end());
      return rows;
    };
    CHECK(rows_sorted(zt) == rows_sorted(z));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Permutation d = random_derangement(rng, 2 + rng.below(30));
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.indices()[i] != i);
  }
}

TEST_CASE("permuted codes route gradients back to their source rows") {
  Parameter z("z", DenseArray::from_rows({{1}, {2}, {3}}));
  Graph g;
  Var w = g.constant(DenseArray::from_rows({{10}, {20}, {30}}));
  g.backward(diff::sum_all(diff::mul(permute_codes(g.param(z), Permutation({2, 0, 1})), w)));
  CHECK(z.grad[0] == 20.0);
  CHECK(z.grad[1] == 30.0);
  CHECK(z.grad[2] == 10.0);
}

// ---------------------------------------------------------------------------
// Bounds

TEST_CASE("bounds on zero scores") {
  Graph g;
  Var t = g.constant(DenseArray(8, 1));
  CHECK(mi_lower_bound(DivergenceSpec::kl_f_dual(), t, t).value().item() ==
        doctest::Approx(-std::exp(-1.0)));
  CHECK(mi_lower_bound(DivergenceSpec::donsker_varadhan(), t, t).value().item() ==
        doctest::Approx(0.0));
  CHECK_THROWS_AS(mi_lower_bound(DivergenceSpec::kl_f_dual(), t, g.constant(DenseArray(4, 1))),
                  DimensionError);
}

TEST_CASE("bound values against direct formulas") {
  Rng rng(6);
  const DenseArray tj = uniform_array(rng, 16, 1, -3, 3);
  const DenseArray tm = uniform_array(rng, 16, 1, -3, 3);
  double mj = 0.0, fdual = 0.0, mx = -1e300;
  for (std::size_t i = 0; i < 16; ++i) {
    mj += tj[i] / 16.0;
    fdual += std::exp(tm[i] - 1.0) / 16.0;
    mx = std::max(mx, tm[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < 16; ++i) s += std::exp(tm[i] - mx);
  const double lme = mx + std::log(s / 16.0);
  Graph g;
  Var a = g.constant(tj);
  Var b = g.constant(tm);
  CHECK(mi_lower_bound(DivergenceSpec::kl_f_dual(), a, b).value().item() ==
        doctest::Approx(mj - fdual));
  CHECK(mi_lower_bound(generic_kl(), a, b).value().item() == doctest::Approx(mj - fdual));
  CHECK(mi_lower_bound(DivergenceSpec::donsker_varadhan(), a, b).value().item() ==
        doctest::Approx(mj - lme));
  double chi = 0.0;
  for (std::size_t i = 0; i < 16; ++i) chi += (tm[i] + tm[i] * tm[i] / 4.0) / 16.0;
  CHECK(mi_lower_bound(pearson_chi2(), a, b).value().item() == doctest::Approx(mj - chi));
}

TEST_CASE("scores are clipped before the bound") {
  Graph g;
  Var big = g.constant(DenseArray(4, 1, 1e4));
  const double v = mi_lower_bound(DivergenceSpec::kl_f_dual(), big, big).value().item();
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(kScoreClamp - std::exp(kScoreClamp - 1.0)));
}

TEST_CASE("Donsker-Varadhan bound dominates the f-dual bound") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(64);
    const double spread = rng.uniform(0.0, 5.0);
    const DenseArray tj = uniform_array(rng, n, 1, -spread, spread);
    const DenseArray tm = uniform_array(rng, n, 1, -spread, spread);
    Graph g;
    const double dv =
        mi_lower_bound(DivergenceSpec::donsker_varadhan(), g.constant(tj), g.constant(tm))
            .value()
            .item();
    const double fd =
        mi_lower_bound(DivergenceSpec::kl_f_dual(), g.constant(tj), g.constant(tm)).value().item();
    CHECK(dv >= fd);
  }
  // Equal marginal scores of 1 close the gap.
  Graph g;
  Var t = g.constant(DenseArray(5, 1, 1.0));
  CHECK(mi_lower_bound(DivergenceSpec::donsker_varadhan(), t, t).value().item() ==
        doctest::Approx(mi_lower_bound(DivergenceSpec::kl_f_dual(), t, t).value().item()));
}

TEST_CASE("divergence specs") {
  CHECK(divergence_from_name("kl-f-dual").kind == DivergenceKind::kl_f_dual);
  CHECK(divergence_from_name("dv").kind == DivergenceKind::donsker_varadhan);
  CHECK(divergence_from_name("donsker-varadhan").kind == DivergenceKind::donsker_varadhan);
  CHECK_THROWS_AS(divergence_from_name("js"), ConfigError);
  auto identity_conj = [](Var t) { return t; };
  CHECK_THROWS_AS(DivergenceSpec::generic("shifted", [](double u) { return u * u; }, identity_conj),
                  ContractError);
  CHECK_THROWS_AS(
      DivergenceSpec::generic("concave", [](double u) { return -(u - 1) * (u - 1); }, identity_conj),
      ContractError);
  CHECK(generic_kl().kind == DivergenceKind::generic_f_dual);
}

// ---------------------------------------------------------------------------
// Composite objectives

TEST_CASE("InfoMax loss reductions") {
  Rng rng(8);
  const DenseArray xv = uniform_array(rng, 6, 5, 0, 1);
  const DenseArray rv = uniform_array(rng, 6, 5, 0.05, 0.95);
  const DenseArray mu = rng.normal_array(6, 2);
  const DenseArray lv = uniform_array(rng, 6, 2, -1, 1);
  Graph g;
  Var x = g.constant(xv);
  Var r = g.constant(rv);
  const GaussianPosterior post = constant_posterior(g, mu, lv);
  const ElboTerms elbo = elbo_terms(x, post, r);

  const InfomaxLoss plain = infomax_loss(ObjectiveConfig{.alpha = 0, .beta = 1}, x, post, r, {});
  CHECK(plain.vae_loss.value().item() == -elbo.elbo().value().item());

  const InfomaxLoss beta4 = infomax_loss(ObjectiveConfig{.alpha = 0, .beta = 4}, x, post, r, {});
  CHECK(beta4.vae_loss.value().item() ==
        -(elbo.recon_ll.value().item() - 4.0 * elbo.kl.value().item()));

  Var zero = g.constant(DenseArray(6, 1));
  const InfomaxLoss im =
      infomax_loss(ObjectiveConfig{.alpha = 10, .beta = 1}, x, post, r, CriticScores{zero, zero});
  CHECK(im.vae_loss.value().item() ==
        doctest::Approx(-(elbo.recon_ll.value().item() - elbo.kl.value().item() +
                          10.0 * -std::exp(-1.0))));
  CHECK(im.critic_loss.value().item() == doctest::Approx(std::exp(-1.0)));

  CHECK_THROWS_AS(infomax_loss(ObjectiveConfig{.alpha = 10}, x, post, r, {}), ContractError);
  CHECK_THROWS_AS(infomax_loss(ObjectiveConfig{.alpha = -1}, x, post, r, {}), ContractError);
}

TEST_CASE("MMD estimators") {
  const std::vector<double> one{1.0};
  Rng rng(9);
  SUBCASE("default bandwidths") {
    CHECK(default_mmd_bandwidths(8) == std::vector<double>{2, 4, 8, 16, 32});
  }
  SUBCASE("biased estimate of a sample against itself is zero") {
    const DenseArray q = rng.normal_array(10, 3);
    Graph g;
    CHECK(std::abs(mmd2_biased(g.constant(q), g.constant(q), one).value().item()) < 1e-12);
    const DenseArray p = rng.normal_array(10, 3);
    CHECK(mmd2_biased(g.constant(q), g.constant(p), one).value().item() > 0.0);
  }
  SUBCASE("far-apart Gaussians match the double-sum oracle") {
    DenseArray q = rng.normal_array(12, 2);
    DenseArray p = rng.normal_array(12, 2);
    for (double& v : q.data()) v += 10.0;
    for (double& v : p.data()) v -= 10.0;
    Graph g;
    const double got = mmd2_unbiased(g.constant(q), g.constant(p), one).value().item();
    CHECK(got == doctest::Approx(mmd2_oracle(q, p, one)).epsilon(1e-12));
  }
  SUBCASE("multi-bandwidth estimate matches the oracle") {
    const DenseArray q = rng.normal_array(9, 4);
    const DenseArray p = rng.normal_array(7, 4);
    const auto hs = default_mmd_bandwidths(4);
    Graph g;
    const double got = mmd2_unbiased(g.constant(q), g.constant(p), hs).value().item();
    CHECK(got == doctest::Approx(mmd2_oracle(q, p, hs)).epsilon(1e-12));
  }
  SUBCASE("gradients") {
    Parameter q("q", rng.normal_array(5, 2));
    const DenseArray p = rng.normal_array(5, 2);
    const auto hs = default_mmd_bandwidths(2);
    auto fd = check_gradients({&q}, [&](Graph& g) {
      return mmd2_unbiased(g.param(q), g.constant(p), hs);
    });
    CHECK(fd.max_rel_error < 1e-6);
  }
  SUBCASE("single-row samples are rejected") {
    Graph g;
    CHECK_THROWS_AS(mmd2_unbiased(g.constant(DenseArray(1, 2)), g.constant(DenseArray(3, 2)), one),
                    ContractError);
  }
}

TEST_CASE("MMD objective coefficients") {
  Rng rng(10);
  Graph g;
  Var x = g.constant(uniform_array(rng, 6, 4, 0, 1));
  Var r = g.constant(uniform_array(rng, 6, 4, 0.05, 0.95));
  const GaussianPosterior post =
      constant_posterior(g, rng.normal_array(6, 2), uniform_array(rng, 6, 2, -1, 1));
  Var z = g.constant(rng.normal_array(6, 2));
  Var prior = g.constant(rng.normal_array(6, 2));
  const ElboTerms elbo = elbo_terms(x, post, r);

  const MmdLoss vanilla =
      mmd_infovae_loss(ObjectiveConfig{.mmd_alpha = 0, .mmd_lambda = 1}, x, post, z, r, prior);
  CHECK(vanilla.loss.value().item() == doctest::Approx(-elbo.elbo().value().item()));

  const ObjectiveConfig cfg{.mmd_alpha = 0.5, .mmd_lambda = 10};
  const MmdLoss full = mmd_infovae_loss(cfg, x, post, z, r, prior);
  const double mmd =
      mmd2_unbiased(z, prior, default_mmd_bandwidths(2)).value().item();
  CHECK(full.mmd2.value().item() == doctest::Approx(mmd));
  CHECK(full.loss.value().item() ==
        doctest::Approx(-elbo.recon_ll.value().item() + 0.5 * elbo.kl.value().item() + 9.5 * mmd));

  CHECK_THROWS_AS(
      mmd_infovae_loss(cfg, x, post, z, r, g.constant(rng.normal_array(5, 2))), ContractError);
}

// ---------------------------------------------------------------------------
// KL decomposition diagnostics

TEST_CASE("decomposed KL terms") {
  Rng rng(11);
  SUBCASE("posterior equal to the prior") {
    const DenseArray zeros(16, 2);
    const DenseArray z = rng.normal_array(16, 2);
    const std::vector<double> kl(16, 0.0);
    const DecomposedKl d = decomposed_kl_terms(kl, zeros, zeros, z, 0.0);
    CHECK(d.kl_qzx_p == 0.0);
    CHECK(std::abs(d.kl_qz_p_estimate) < 1e-12);
    CHECK(std::abs(d.mi_identity_residual) < 1e-12);
  }
  SUBCASE("one repeated datapoint") {
    const std::size_t n = 4000;
    DenseArray mean(n, 1, 0.7);
    DenseArray lv(n, 1, -0.5);
    DenseArray z(n, 1);
    for (std::size_t r = 0; r < n; ++r) z[r] = 0.7 + std::exp(-0.25) * rng.normal();
    const double kl = 0.5 * (0.49 + std::exp(-0.5) - 1.0 + 0.5);
    const DecomposedKl d = decomposed_kl_terms(std::vector<double>(n, kl), mean, lv, z, 0.0);
    CHECK(d.kl_qzx_p == doctest::Approx(kl));
    CHECK(std::abs(d.kl_qz_p_estimate - d.kl_qzx_p) < 0.05);
  }
  SUBCASE("two-component mixture against numerical integration") {
    // Half the data maps to N(-m, s^2), half to N(m, s^2).
    const double m = 1.5;
    const double lv = std::log(0.25);
    const std::size_t n = 2000;
    DenseArray mean(n, 1), log_var(n, 1, lv), z(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
      mean[r] = (r % 2 == 0) ? -m : m;
      z[r] = mean[r] + std::exp(0.5 * lv) * rng.normal();
    }
    const double kl_each = 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    // KL(q(z) || p) by the trapezoid rule on [-12, 12].
    auto normal_pdf = [](double x, double mu, double var) {
      return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * std::numbers::pi * var);
    };
    double kl_qz = 0.0;
    const double step = 1e-4;
    for (double t = -12.0; t <= 12.0; t += step) {
      const double q = 0.5 * normal_pdf(t, -m, std::exp(lv)) + 0.5 * normal_pdf(t, m, std::exp(lv));
      if (q > 0.0) kl_qz += q * (std::log(q) - std::log(normal_pdf(t, 0.0, 1.0))) * step;
    }
    const double mi = kl_each - kl_qz;
    const DecomposedKl d = decomposed_kl_terms(std::vector<double>(n, kl_each), mean, log_var, z, mi);
    CHECK(std::abs(d.kl_qz_p_estimate - kl_qz) < 0.1);
    CHECK(std::abs(d.mi_identity_residual) < 0.1);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(decomposed_kl_terms(std::vector<double>(3, 0.0), DenseArray(4, 2),
                                        DenseArray(4, 2), DenseArray(4, 2), 0.0),
                    DimensionError);
  }
}
