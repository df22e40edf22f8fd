// Copyright 2026 The fpreg Authors.
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fpreg/error.hpp"
#include "fpreg/gmm.hpp"
#include "fpreg/pipeline.hpp"
#include "oracles.hpp"

using namespace fpreg;

namespace {

GaussianMixture from_oracle(const oracle::Mixture& m) { return {m.dim, m.weights, m.means, m.variances}; }

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t d, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> w(d);
  for (auto& v : w) v = u(gen);
  return w;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an fpreg::Error");
  return ErrorKind::kInvariant;
}

double rel(double a, oracle::real b) { return static_cast<double>(std::fabs(a - b) / std::fabs(b)); }

const std::vector<double> kZero9(9, 0.0);

// Values quoted to six decimals agree to half a unit in the last place.
bool printed(double got, double quoted) { return std::fabs(got - quoted) <= 5e-7; }

}  // namespace

TEST_CASE("gaussian_logpdf closed values") {
  const std::vector<double> one9(9, 1.0);
  CHECK(printed(gaussian_logpdf(kZero9, kZero9, one9), -8.270447));
  CHECK(gaussian_logpdf(kZero9, kZero9, one9) == doctest::Approx(-4.5 * std::log(2 * M_PI)).epsilon(1e-15));
  const std::vector<double> w{1.0}, mu{0.0}, var{1.0};
  CHECK(printed(gaussian_logpdf(w, mu, var), -1.418939));
}

TEST_CASE("gaussian_logpdf matches the extended precision density") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int t = 0; t < 200; ++t) {
    auto w = random_vec(gen, 9, 2.0), mu = random_vec(gen, 9, 2.0);
    std::vector<double> var(9);
    for (auto& v : var) v = u(gen);
    CHECK(rel(gaussian_logpdf(w, mu, var), oracle::gaussian_logpdf(w, mu.data(), var.data())) < 1e-12);
  }
}

TEST_CASE("gaussian_logpdf stays finite where the density underflows") {
  std::vector<double> w(9, 0.0), one(9, 1.0);
  w[0] = 38.0;  // exponent about -722
  const double v = gaussian_logpdf(w, kZero9, one);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-722.0 - 4.5 * std::log(2 * M_PI)));
  w[0] = 1e3;
  CHECK(std::isfinite(gaussian_logpdf(w, kZero9, one)));
  const std::vector<double> bad{1, 1, 1, 1, 0, 1, 1, 1, 1};
  CHECK(kind_of([&] { gaussian_logpdf(kZero9, kZero9, bad); }) == ErrorKind::kInput);
}

TEST_CASE("gmm_logpdf") {
  GaussianMixture dup{1, {0.5, 0.5}, {0.0, 0.0}, {1.0, 1.0}};
  const std::vector<double> z{0.0};
  CHECK(printed(gmm_logpdf(z, dup), -0.918939));

  std::mt19937_64 gen(5);
  const auto one = from_oracle(oracle::random_mixture(gen, 1, 9));
  const auto w = random_vec(gen, 9, 1.0);
  CHECK(gmm_logpdf(w, one) == gaussian_logpdf(w, one.mean(0), one.variance(0)) + std::log(1.0));

  for (int t = 0; t < 100; ++t) {
    const auto om = oracle::random_mixture(gen, 5, 9);
    const auto x = random_vec(gen, 9, 1.5);
    CHECK(rel(gmm_logpdf(x, from_oracle(om)), oracle::gmm_logpdf(x, om)) < 1e-12);
  }
  const std::vector<double> short_w(3, 0.0);
  CHECK(kind_of([&] { gmm_logpdf(short_w, one); }) == ErrorKind::kInput);
}

TEST_CASE("nll values") {
  const auto sn = GaussianMixture::isotropic(kZero9, 1.0);
  CHECK(printed(nll(kZero9, sn), 8.270447));

  std::mt19937_64 gen(8);
  const auto m = from_oracle(oracle::random_mixture(gen, 4, 9));
  for (int t = 0; t < 20; ++t) {
    const auto w = random_vec(gen, 9, 3.0);
    CHECK(nll(w, m) == -gmm_logpdf(w, m));
  }

  // ||w - mu|| = 100 from every mean: bounded below by the nearest term.
  std::vector<double> far(9, 0.0);
  far[0] = 100.0;
  GaussianMixture two{9, {0.5, 0.5}, std::vector<double>(18, 0.0), std::vector<double>(18, 1.0)};
  two.means[9] = 1e-3;
  const double v = nll(far, two);
  CHECK(std::isfinite(v));
  CHECK(v > 4000.0);
}

TEST_CASE("nll_total") {
  const auto sn = GaussianMixture::isotropic(kZero9, 1.0);
  FilterBank three(9);
  const float zero[9] = {};
  for (int i = 0; i < 3; ++i) three.append(std::span<const float>(zero, 9));
  // The quoted total is three times the rounded single value.
  CHECK(std::fabs(nll_total(three, sn) - 24.811341) <= 3 * 5e-7);
  CHECK(nll_total(three, sn) == doctest::Approx(3 * nll(kZero9, sn)).epsilon(1e-15));
  CHECK(nll_total(FilterBank(9), sn) == 0.0);

  std::mt19937_64 gen(13);
  const auto m = from_oracle(oracle::random_mixture(gen, 6, 9));
  Matrix x(100, 9);
  for (auto& v : x.data) v = std::uniform_real_distribution<double>(-1, 1)(gen);
  double naive = 0;
  for (std::size_t i = 0; i < 100; ++i) naive += nll(std::vector<double>(x.row(i).begin(), x.row(i).end()), m);
  CHECK(rel(nll_total(x, m), naive) < 1e-10);
}

TEST_CASE("responsibilities") {
  const auto sn = GaussianMixture::isotropic(kZero9, 1.0);
  CHECK(responsibilities(kZero9, sn) == std::vector<double>{1.0});
  GaussianMixture same{1, {0.25, 0.75}, {0.0, 0.0}, {1.0, 1.0}};
  const auto g = responsibilities(std::vector<double>{0.3}, same);
  CHECK(g[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(0.75).epsilon(1e-15));

  std::mt19937_64 gen(17);
  for (int t = 0; t < 100; ++t) {
    const auto om = oracle::random_mixture(gen, 7, 9);
    const auto w = random_vec(gen, 9, 1.0);
    const auto r = responsibilities(w, from_oracle(om));
    const auto o = oracle::responsibilities(w, om);
    double s = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      s += r[k];
      CHECK(std::fabs(r[k] - static_cast<double>(o[k])) < 1e-12);
    }
    CHECK(std::fabs(s - 1.0) <= 1e-14);
  }
}

TEST_CASE("select_component") {
  CHECK(select_component(kZero9, GaussianMixture::isotropic(kZero9, 1.0)) == 0);

  GaussianMixture m{1, {0.9, 0.1}, {0.0, 10.0}, {1.0, 1.0}};
  const std::vector<double> w{9.0};
  // Weighted log densities by hand: log(0.9) - 40.5 - c versus log(0.1) - 0.5 - c.
  const double c = 0.5 * std::log(2 * M_PI);
  CHECK(std::log(0.9) - 40.5 - c == doctest::Approx(-41.5).epsilon(1e-2));
  CHECK(std::log(0.1) - 0.5 - c == doctest::Approx(-3.72).epsilon(1e-3));
  CHECK(select_component(w, m) == 1);

  GaussianMixture shared{1, {0.1, 0.2, 0.5, 0.2}, {3.0, 1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}};
  CHECK(select_component(std::vector<double>{1.0}, shared) == 2);

  // Exact ties go to the lowest index.
  GaussianMixture tie{1, {0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0}};
  CHECK(select_component(std::vector<double>{0.0}, tie) == 0);

  // Rescaling all weights by a constant does not move the argmax.
  std::mt19937_64 gen(23);
  for (int t = 0; t < 50; ++t) {
    auto om = oracle::random_mixture(gen, 6, 9);
    const auto w = random_vec(gen, 9, 1.0);
    const auto a = select_component(w, from_oracle(om));
    double s = 0;
    for (auto& p : om.weights) s += (p *= 3.7);
    for (auto& p : om.weights) p /= s;
    CHECK(select_component(w, from_oracle(om)) == a);
  }
}

TEST_CASE("grad_approx closed values") {
  const std::vector<double> two(9, 2.0);
  const auto m = GaussianMixture::isotropic(kZero9, 4.0);
  for (double g : grad_approx(two, m)) CHECK(g == 0.5);
  std::mt19937_64 gen(2);
  const auto mix = from_oracle(oracle::random_mixture(gen, 5, 9, 5.0));
  const std::vector<double> at(mix.mean(3).begin(), mix.mean(3).end());
  if (select_component(at, mix) == 3)
    for (double g : grad_approx(at, mix)) CHECK(g == 0.0);
}

TEST_CASE("grad_exact: single component, symmetry, finite differences") {
  std::mt19937_64 gen(29);
  const auto one = from_oracle(oracle::random_mixture(gen, 1, 9));
  for (int t = 0; t < 20; ++t) {
    const auto w = random_vec(gen, 9, 2.0);
    CHECK(grad_exact(w, one) == grad_approx(w, one));
  }

  GaussianMixture sym{9, {0.5, 0.5}, std::vector<double>(18, 0.0), std::vector<double>(18, 0.7)};
  for (std::size_t j = 0; j < 9; ++j) {
    sym.means[j] = -1.3;
    sym.means[9 + j] = 1.3;
  }
  for (double g : grad_exact(kZero9, sym)) CHECK(g == 0.0);

  const std::vector<double> steps(9, 1e-5);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto m = from_oracle(oracle::random_mixture(gen, 5, 9));
    const auto w = random_vec(gen, 9, 1.0);
    const auto a = grad_exact(w, m);
    const auto f = finite_difference_grad(w, m, steps);
    for (std::size_t j = 0; j < 9; ++j)
      worst = std::max(worst, std::fabs(a[j] - f[j]) / std::max({1.0, std::fabs(a[j]), std::fabs(f[j])}));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("grad_approx equals grad_exact under a dominant component") {
  GaussianMixture m{9, {0.5, 0.5}, std::vector<double>(18, 0.0), std::vector<double>(18, 0.1)};
  for (std::size_t j = 0; j < 9; ++j) m.means[9 + j] = 4.0;
  std::mt19937_64 gen(3);
  int dominant = 0;
  for (int t = 0; t < 200; ++t) {
    auto w = random_vec(gen, 9, 0.5);
    const auto r = responsibilities(w, m);
    if (std::max(r[0], r[1]) <= 1 - 1e-12) continue;
    ++dominant;
    const auto a = grad_approx(w, m), e = grad_exact(w, m);
    for (std::size_t j = 0; j < 9; ++j) CHECK(std::fabs(a[j] - e[j]) <= 1e-9);
  }
  CHECK(dominant > 100);
}

TEST_CASE("weight decay equivalence for an isotropic zero-mean component") {
  std::mt19937_64 gen(31);
  for (double var : {0.25, 1.0, 3.0}) {
    const auto m = GaussianMixture::isotropic(kZero9, var);
    for (int t = 0; t < 10; ++t) {
      const auto w = random_vec(gen, 9, 2.0);
      double sq = 0;
      for (double v : w) sq += v * v;
      CHECK(nll(w, m) == doctest::Approx(sq / (2 * var) + 4.5 * std::log(2 * M_PI * var)).epsilon(1e-13));
      const auto g = grad_exact(w, m);
      for (std::size_t j = 0; j < 9; ++j) CHECK(g[j] == doctest::Approx(w[j] / var).epsilon(1e-15));
    }
  }
}

TEST_CASE("em: repeated point collapses to the floor") {
  Matrix x(50, 9);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 9; ++j) x(i, j) = 0.25 * static_cast<double>(j) - 1.0;
  EmConfig cfg;
  cfg.components = 1;
  const auto r = em_fit(x, cfg);
  CHECK(r.model.weights == std::vector<double>{1.0});
  for (std::size_t j = 0; j < 9; ++j) {
    CHECK(r.model.means[j] == x(0, j));
    CHECK(r.model.variances[j] == 1e-6);
  }
}

TEST_CASE("em: two one dimensional clusters") {
  std::mt19937_64 gen(37);
  std::normal_distribution<double> n(0.0, 0.1);
  Matrix x(200, 1);
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    x(i, 0) = (i % 2 ? 5.0 : -5.0) + n(gen);
    (i % 2 ? hi : lo) += x(i, 0) / 100.0;
  }
  EmConfig cfg;
  cfg.components = 2;
  const auto r = em_fit(x, cfg);
  const std::size_t a = r.model.means[0] < r.model.means[1] ? 0 : 1;
  CHECK(std::fabs(r.model.means[a] - lo) < 0.05);
  CHECK(std::fabs(r.model.means[1 - a] - hi) < 0.05);
  CHECK(std::fabs(r.model.weights[0] - 0.5) < 0.05);
  CHECK(r.monotone());
  CHECK(r.converged);
}

TEST_CASE("em: trace is monotone and deterministic") {
  std::mt19937_64 gen(41);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(600, 9);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < 9; ++j) x(i, j) = 0.3 * n(gen) + (i % 3 == 0 ? 1.0 : 0.0) * static_cast<double>(j % 2);
  EmConfig cfg;
  cfg.components = 8;
  cfg.seed = 4;
  std::size_t seen = 0;
  const auto r = em_fit(x, cfg, [&](const EmIteration&) { ++seen; });
  CHECK(seen == r.trace.size());
  for (std::size_t t = 1; t < r.trace.size(); ++t) {
    if (r.trace[t].reseeded || r.trace[t - 1].reseeded) continue;
    CHECK(r.trace[t].log_likelihood >= r.trace[t - 1].log_likelihood - 1e-9 * std::fabs(r.trace[t - 1].log_likelihood));
  }
  CHECK(em_fit(x, cfg).model == r.model);
  r.model.validate(1e-12, 1e-6);
}

TEST_CASE("em input errors") {
  Matrix x(3, 9);
  EmConfig cfg;
  cfg.components = 4;
  CHECK(kind_of([&] { em_fit(x, cfg); }) == ErrorKind::kInput);
  cfg.components = 2;
  x(1, 1) = INFINITY;
  CHECK(kind_of([&] { em_fit(x, cfg); }) == ErrorKind::kInput);
}
