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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fpreg {

inline constexpr double kDefaultVarianceFloor = 1e-6;

// Diagonal-covariance Gaussian mixture. Component k owns weights[k] and the
// k-th row (length dim) of means and variances.
struct GaussianMixture {
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t components() const { return weights.size(); }

  std::span<const double> mean(std::size_t k) const {
    return {means.data() + k * dim, dim};
  }
  std::span<const double> variance(std::size_t k) const {
    return {variances.data() + k * dim, dim};
  }

  // Throws kValidation unless sizes agree, K >= 1, weights are nonnegative
  // and sum to one within weight_tol, and every variance is >= min_variance.
  void validate(double weight_tol = 1e-12, double min_variance = 0.0) const;

  // Single component with the given mean and a shared isotropic variance.
  static GaussianMixture isotropic(std::span<const double> mean, double variance);

  bool operator==(const GaussianMixture&) const = default;
};

}  // namespace fpreg
