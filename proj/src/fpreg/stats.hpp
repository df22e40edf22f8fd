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

// k-means clustering of filter banks and per-cluster moments, with CSV/PGM
// renderings of the resulting cluster report.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpreg/numeric.hpp"
#include "fpreg/tensorio.hpp"

namespace fpreg {

Matrix to_matrix(const FilterBank& bank);

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;  // k x dim
  std::uint64_t seed = 0;
  // Mean squared distance of each sample to its nearest final centroid.
  double distortion = 0.0;
  std::size_t iterations = 0;
  std::vector<double> distortion_trace;  // one entry per assignment pass
  std::vector<std::uint32_t> assignments;

  std::span<const double> centroid(std::size_t c) const {
    return {centroids.data() + c * dim, dim};
  }
};

// Lloyd iterations from k-means++ seeding. Empty clusters are re-seeded to
// the sample farthest from its assigned centroid. Throws kInput on an empty
// bank or N < K and kInvariant if the distortion ever increases.
KMeansModel kmeans_fit(const Matrix& samples, std::size_t k, std::uint64_t seed,
                       std::size_t max_iters = 300);
KMeansModel kmeans_fit(const FilterBank& bank, std::size_t k, std::uint64_t seed,
                       std::size_t max_iters = 300);

// Nearest centroid by Euclidean distance; ties go to the lowest index.
std::vector<std::uint32_t> assign(const KMeansModel& model, const Matrix& samples);
std::vector<std::uint32_t> assign(const KMeansModel& model, const FilterBank& bank);

struct ClusterReport {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<std::uint32_t> assignments;
  std::vector<std::size_t> histogram;
  std::vector<double> means;        // k x dim
  std::vector<double> covariances;  // k x dim x dim, population (divide by n)
  std::vector<bool> empty;

  std::span<const double> mean(std::size_t c) const { return {means.data() + c * dim, dim}; }
  std::span<const double> covariance(std::size_t c) const {
    return {covariances.data() + c * dim * dim, dim * dim};
  }
};

ClusterReport cluster_moments(const Matrix& samples, std::span<const std::uint32_t> assignments,
                              std::size_t k);
ClusterReport cluster_moments(const FilterBank& bank, std::span<const std::uint32_t> assignments,
                              std::size_t k);

// Rendered artifact names, relative to the output directory.
struct ReportFiles {
  std::vector<std::string> mean_csv;
  std::vector<std::string> mean_pgm;
  std::vector<std::string> covariance_csv;
  std::string histogram_csv;
};

// 3x3 mean grid as binary PGM (P5): min-max normalised to 0..255, a constant
// grid maps to 128. Requires dim == 9.
std::string render_mean_pgm(std::span<const double> mean);
std::string render_matrix_csv(std::span<const double> values, std::size_t cols);
std::string render_histogram_csv(std::span<const std::size_t> histogram);

ReportFiles render_report(const ClusterReport& report, const std::filesystem::path& out_dir);

// Shortest-round-trip-safe text for a real: 17 significant digits.
std::string format_real17(double v);

}  // namespace fpreg
