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

#include "fpreg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fpreg/error.hpp"
#include "fpreg/stats.hpp"

namespace fpreg {
namespace {

void check_dims(std::size_t got, const GaussianMixture& m) {
  if (got != m.dim)
    fail(ErrorKind::kInput, "vector of dim " + std::to_string(got) + " against a mixture of dim " +
                                std::to_string(m.dim));
}

// Per-component constants: log pi_k - 0.5 (d log 2pi + sum log var) and 1/var.
struct Prepared {
  std::vector<double> log_const;
  std::vector<double> inv_var;
};

Prepared prepare(const GaussianMixture& m) {
  Prepared p;
  const std::size_t k = m.components(), d = m.dim;
  p.log_const.resize(k);
  p.inv_var.resize(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    double log_det = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = m.variances[c * d + j];
      log_det += std::log(v);
      p.inv_var[c * d + j] = 1.0 / v;
    }
    p.log_const[c] = std::log(m.weights[c]) - 0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
  }
  return p;
}

void scores_into(std::span<const double> w, const GaussianMixture& m, const Prepared& p,
                 std::vector<double>& out) {
  const std::size_t k = m.components(), d = m.dim;
  out.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double* mu = m.means.data() + c * d;
    const double* iv = p.inv_var.data() + c * d;
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double z = w[j] - mu[j];
      q += z * z * iv[j];
    }
    out[c] = p.log_const[c] - 0.5 * q;
  }
}

}  // namespace

void GaussianMixture::validate(double weight_tol, double min_variance) const {
  const std::size_t k = weights.size();
  if (dim == 0 || k == 0) fail(ErrorKind::kValidation, "mixture needs dim >= 1 and K >= 1");
  if (means.size() != k * dim || variances.size() != k * dim)
    fail(ErrorKind::kValidation, "mixture parameter arrays do not match K x dim");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      fail(ErrorKind::kValidation, "mixture weight " + format_real17(w) + " is not a probability");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > weight_tol)
    fail(ErrorKind::kValidation, "mixture weights sum to " + format_real17(sum));
  for (double v : variances)
    if (!(v > 0.0) || !(v >= min_variance) || !std::isfinite(v))
      fail(ErrorKind::kValidation, "mixture variance " + format_real17(v) + " is not allowed");
  for (double mu : means)
    if (!std::isfinite(mu)) fail(ErrorKind::kValidation, "mixture mean is not finite");
}

GaussianMixture GaussianMixture::isotropic(std::span<const double> mean, double variance) {
  GaussianMixture m;
  m.dim = mean.size();
  m.weights = {1.0};
  m.means.assign(mean.begin(), mean.end());
  m.variances.assign(mean.size(), variance);
  return m;
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

double gaussian_logpdf(std::span<const double> w, std::span<const double> mu,
                       std::span<const double> var) {
  if (w.size() != mu.size() || w.size() != var.size())
    fail(ErrorKind::kInput, "gaussian_logpdf: dimension mismatch");
  double log_det = 0.0, q = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (!(var[j] > 0.0)) fail(ErrorKind::kInput, "gaussian_logpdf: nonpositive variance");
    log_det += std::log(var[j]);
    const double z = w[j] - mu[j];
    q += z * z / var[j];
  }
  return -0.5 * (static_cast<double>(w.size()) * kLog2Pi + log_det + q);
}

std::vector<double> component_log_scores(std::span<const double> w, const GaussianMixture& m) {
  check_dims(w.size(), m);
  std::vector<double> s;
  scores_into(w, m, prepare(m), s);
  return s;
}

double gmm_logpdf(std::span<const double> w, const GaussianMixture& m) {
  const auto s = component_log_scores(w, m);
  return log_sum_exp(s);
}

double nll(std::span<const double> w, const GaussianMixture& m) { return -gmm_logpdf(w, m); }

double nll_total(const Matrix& x, const GaussianMixture& m) {
  if (x.rows == 0) return 0.0;
  check_dims(x.cols, m);
  const Prepared p = prepare(m);
  std::vector<double> s;
  CompensatedSum total;
  for (std::size_t i = 0; i < x.rows; ++i) {
    scores_into(x.row(i), m, p, s);
    total.add(-log_sum_exp(s));
  }
  return total.value();
}

double nll_total(const FilterBank& bank, const GaussianMixture& m) {
  return nll_total(to_matrix(bank), m);
}

std::vector<double> responsibilities(std::span<const double> w, const GaussianMixture& m) {
  auto s = component_log_scores(w, m);
  const double lse = log_sum_exp(s);
  for (double& v : s) v = std::exp(v - lse);
  return s;
}

std::size_t select_component(std::span<const double> w, const GaussianMixture& m) {
  const auto s = component_log_scores(w, m);
  std::size_t best = 0;
  for (std::size_t c = 1; c < s.size(); ++c)
    if (s[c] > s[best]) best = c;
  return best;
}

std::vector<double> grad_approx(std::span<const double> w, const GaussianMixture& m) {
  const std::size_t s = select_component(w, m);
  const auto mu = m.mean(s);
  const auto var = m.variance(s);
  std::vector<double> g(m.dim);
  for (std::size_t j = 0; j < m.dim; ++j) g[j] = (w[j] - mu[j]) / var[j];
  return g;
}

std::vector<double> grad_exact(std::span<const double> w, const GaussianMixture& m) {
  const auto gamma = responsibilities(w, m);
  std::vector<double> g(m.dim, 0.0);
  for (std::size_t c = 0; c < m.components(); ++c) {
    if (gamma[c] == 0.0) continue;
    const auto mu = m.mean(c);
    const auto var = m.variance(c);
    for (std::size_t j = 0; j < m.dim; ++j) g[j] += gamma[c] * ((w[j] - mu[j]) / var[j]);
  }
  return g;
}

bool EmResult::monotone() const {
  return std::all_of(trace.begin(), trace.end(), [](const EmIteration& it) { return it.monotone; });
}

EmResult em_fit(const Matrix& x, const EmConfig& cfg, const EmObserver& observer) {
  const std::size_t n = x.rows, d = x.cols, k = cfg.components;
  if (k == 0) fail(ErrorKind::kInput, "EM needs K >= 1");
  if (n < k)
    fail(ErrorKind::kInput, "EM needs N >= K (N=" + std::to_string(n) + ", K=" + std::to_string(k) + ")");
  if (!all_finite(x.data)) fail(ErrorKind::kInput, "EM input contains non-finite values");
  if (!(cfg.variance_floor > 0.0) || !(cfg.rel_tol > 0.0))
    fail(ErrorKind::kInput, "EM variance floor and tolerance must be positive");

  // Warm start from k-means: centroids, cluster proportions and per-cluster
  // diagonal population variances.
  const KMeansModel km = kmeans_fit(x, k, cfg.seed, cfg.kmeans_iters);
  const ClusterReport moments = cluster_moments(x, km.assignments, k);
  GaussianMixture m;
  m.dim = d;
  m.weights.resize(k);
  m.means = km.centroids;
  m.variances.resize(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    m.weights[c] = static_cast<double>(moments.histogram[c]) / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j)
      m.variances[c * d + j] = std::max(moments.covariance(c)[j * d + j], cfg.variance_floor);
  }

  EmResult result;
  const double collapse_weight = 1.0 / (10.0 * static_cast<double>(n));
  double prev_ll = 0.0;
  bool exempt = true;  // nothing to compare against on the first pass
  std::vector<double> scores(k), point_ll(n), nk(k), first(k * d), second(k * d);

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const Prepared p = prepare(m);
    std::fill(nk.begin(), nk.end(), 0.0);
    std::fill(first.begin(), first.end(), 0.0);
    std::fill(second.begin(), second.end(), 0.0);

    // E-step with streamed sufficient statistics. Second moments are taken
    // around the current means to keep the one-pass variance stable.
    CompensatedSum ll_sum;
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      scores_into(xi, m, p, scores);
      const double lse = log_sum_exp(scores);
      point_ll[i] = lse;
      ll_sum.add(lse);
      for (std::size_t c = 0; c < k; ++c) {
        const double g = std::exp(scores[c] - lse);
        if (g == 0.0) continue;
        nk[c] += g;
        const double* mu = m.means.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double z = xi[j] - mu[j];
          first[c * d + j] += g * z;
          second[c * d + j] += g * z * z;
        }
      }
    }
    const double ll = ll_sum.value();

    EmIteration rec;
    rec.iteration = it;
    rec.log_likelihood = ll;
    if (!exempt) rec.monotone = ll >= prev_ll - 1e-9 * std::fabs(prev_ll);
    if (!exempt && std::fabs(ll - prev_ll) <= cfg.rel_tol * std::fabs(prev_ll)) {
      result.converged = true;
      result.trace.push_back(rec);
      if (observer) observer(rec);
      break;
    }

    // M-step.
    for (std::size_t c = 0; c < k; ++c) {
      m.weights[c] = nk[c] / static_cast<double>(n);
      if (nk[c] <= 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        const double shift = first[c * d + j] / nk[c];
        const double var = second[c * d + j] / nk[c] - shift * shift;
        m.means[c * d + j] += shift;
        m.variances[c * d + j] = std::max(var, cfg.variance_floor);
      }
    }

    // Collapsed components restart at the worst-explained samples.
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (m.weights[c] >= collapse_weight) continue;
      std::size_t worst = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && (worst == n || point_ll[i] < point_ll[worst])) worst = i;
      taken[worst] = true;
      std::copy_n(x.row(worst).begin(), d, m.means.begin() + c * d);
      std::fill_n(m.variances.begin() + c * d, d, cfg.variance_floor);
      m.weights[c] = 1.0 / static_cast<double>(n);
      rec.reseeded = true;
    }
    if (rec.reseeded) {
      double total = 0.0;
      for (double w : m.weights) total += w;
      for (double& w : m.weights) w /= total;
    }

    result.trace.push_back(rec);
    if (observer) observer(rec);
    exempt = rec.reseeded;
    prev_ll = ll;
  }

  // Guard against drift in the weight sum from the division by N.
  double total = 0.0;
  for (double w : m.weights) total += w;
  for (double& w : m.weights) w /= total;

  result.model = std::move(m);
  return result;
}

EmResult em_fit(const FilterBank& bank, const EmConfig& cfg, const EmObserver& observer) {
  return em_fit(to_matrix(bank), cfg, observer);
}

}  // namespace fpreg
