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

// Diagonal Gaussian mixture likelihoods, the filter regulariser R(w) =
// -log P(w), its exact and single-component gradients, and EM fitting.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fpreg/mixture.hpp"
#include "fpreg/numeric.hpp"
#include "fpreg/tensorio.hpp"

namespace fpreg {

// log N(w | mu, diag(var)) with the (2 pi)^(-d/2) |Sigma|^(-1/2) normaliser.
double gaussian_logpdf(std::span<const double> w, std::span<const double> mu,
                       std::span<const double> var);

// log sum_k pi_k N(w | mu_k, Sigma_k), via log-sum-exp.
double gmm_logpdf(std::span<const double> w, const GaussianMixture& m);

// R(w) = -log P(w).
double nll(std::span<const double> w, const GaussianMixture& m);

// sum_i R(w_i) over the bank, compensated.
double nll_total(const FilterBank& bank, const GaussianMixture& m);
double nll_total(const Matrix& samples, const GaussianMixture& m);

// Per-component log pi_k + log N(w | k).
std::vector<double> component_log_scores(std::span<const double> w, const GaussianMixture& m);

// Posterior gamma_k(w), normalised in the log domain.
std::vector<double> responsibilities(std::span<const double> w, const GaussianMixture& m);

// argmax_k log pi_k + log N(w | k); lowest index on ties.
std::size_t select_component(std::span<const double> w, const GaussianMixture& m);

// (w - mu_s) / var_s for the selected component s. Drops the gradient of the
// log-sum, i.e. the single-Gaussian approximation used during training.
std::vector<double> grad_approx(std::span<const double> w, const GaussianMixture& m);

// d R / d w = sum_k gamma_k(w) (w - mu_k) / var_k.
std::vector<double> grad_exact(std::span<const double> w, const GaussianMixture& m);

struct EmConfig {
  std::size_t components = 64;
  std::size_t max_iters = 200;
  double rel_tol = 1e-7;
  std::uint64_t seed = 0;
  double variance_floor = kDefaultVarianceFloor;
  std::size_t kmeans_iters = 100;
};

struct EmIteration {
  std::size_t iteration = 0;
  double log_likelihood = 0.0;  // data log-likelihood before this M-step
  bool reseeded = false;        // a component was re-seeded in this M-step
  bool monotone = true;         // LL did not drop (checked unless exempt)
};

struct EmResult {
  GaussianMixture model;
  std::vector<EmIteration> trace;
  bool converged = false;

  // False if any non-exempt iteration decreased the log-likelihood.
  bool monotone() const;
};

using EmObserver = std::function<void(const EmIteration&)>;

// k-means warm start, then diagonal EM. Throws kInput for N < K or
// non-finite data.
EmResult em_fit(const Matrix& samples, const EmConfig& cfg, const EmObserver& observer = {});
EmResult em_fit(const FilterBank& bank, const EmConfig& cfg, const EmObserver& observer = {});

std::vector<double> to_double(std::span<const float> v);

}  // namespace fpreg
