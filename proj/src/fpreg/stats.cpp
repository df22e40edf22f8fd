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

#include "fpreg/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fpreg/error.hpp"

namespace fpreg {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

struct AssignPass {
  std::vector<std::uint32_t> labels;
  std::vector<double> dist2;
  double distortion = 0.0;
};

AssignPass assign_pass(const Matrix& x, const std::vector<double>& centroids, std::size_t k) {
  AssignPass out;
  out.labels.resize(x.rows);
  out.dist2.resize(x.rows);
  CompensatedSum total;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = squared_distance(x.row(i), {centroids.data() + c * x.cols, x.cols});
      if (d < best) {
        best = d;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    out.labels[i] = arg;
    out.dist2[i] = best;
    total.add(best);
  }
  out.distortion = x.rows ? total.value() / static_cast<double>(x.rows) : 0.0;
  return out;
}

std::vector<double> kmeanspp_seed(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows, d = x.cols;
  std::vector<double> centroids(k * d);
  auto put = [&](std::size_t c, std::size_t i) {
    std::copy_n(x.row(i).begin(), d, centroids.begin() + c * d);
  };
  put(0, rng.below(n));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(x.row(i), {centroids.data() + (c - 1) * d, d}));
      total += best[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += best[i];
        if (best[i] > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        // Rounding left the target past the last positive weight.
        for (std::size_t i = n; i-- > 0;)
          if (best[i] > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      pick = rng.below(n);
    }
    put(c, pick);
  }
  return centroids;
}

}  // namespace

std::string format_real17(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Matrix to_matrix(const FilterBank& bank) {
  Matrix m(bank.size(), bank.dim());
  std::copy(bank.values().begin(), bank.values().end(), m.data.begin());
  return m;
}

KMeansModel kmeans_fit(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
  if (x.rows == 0) fail(ErrorKind::kInput, "k-means on an empty bank");
  if (k == 0) fail(ErrorKind::kInput, "k-means needs K >= 1");
  if (x.rows < k)
    fail(ErrorKind::kInput, "k-means needs N >= K (N=" + std::to_string(x.rows) +
                                ", K=" + std::to_string(k) + ")");
  if (!all_finite(x.data)) fail(ErrorKind::kInput, "k-means input contains non-finite values");

  const std::size_t n = x.rows, d = x.cols;
  Rng rng(seed);
  KMeansModel model;
  model.k = k;
  model.dim = d;
  model.seed = seed;
  model.centroids = kmeanspp_seed(x, k, rng);

  AssignPass cur = assign_pass(x, model.centroids, k);
  model.distortion_trace.push_back(cur.distortion);

  for (std::size_t it = 0; it < max_iters; ++it) {
    // Update step.
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = cur.labels[i];
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t j = 0; j < d; ++j)
          model.centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);

    // Empty clusters take the sample currently farthest from its centroid.
    std::vector<double> far(n);
    bool any_empty = false;
    for (std::size_t c = 0; c < k; ++c) any_empty = any_empty || counts[c] == 0;
    if (any_empty) {
      for (std::size_t i = 0; i < n; ++i)
        far[i] = squared_distance(x.row(i), {model.centroids.data() + cur.labels[i] * d, d});
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        const auto i = static_cast<std::size_t>(std::max_element(far.begin(), far.end()) - far.begin());
        std::copy_n(x.row(i).begin(), d, model.centroids.begin() + c * d);
        far[i] = -1.0;
      }
    }

    AssignPass next = assign_pass(x, model.centroids, k);
    const double slack = 1e-12 * std::max(cur.distortion, 1e-300);
    if (next.distortion > cur.distortion + slack)
      fail(ErrorKind::kInvariant, "k-means distortion increased from " +
                                      format_real17(cur.distortion) + " to " +
                                      format_real17(next.distortion));
    model.distortion_trace.push_back(next.distortion);
    model.iterations = it + 1;
    const bool stable = next.labels == cur.labels;
    cur = std::move(next);
    if (stable) break;
  }

  model.assignments = std::move(cur.labels);
  model.distortion = cur.distortion;
  return model;
}

KMeansModel kmeans_fit(const FilterBank& bank, std::size_t k, std::uint64_t seed,
                       std::size_t max_iters) {
  return kmeans_fit(to_matrix(bank), k, seed, max_iters);
}

std::vector<std::uint32_t> assign(const KMeansModel& model, const Matrix& samples) {
  if (samples.cols != model.dim)
    fail(ErrorKind::kInput, "assign: sample dim " + std::to_string(samples.cols) +
                                " != centroid dim " + std::to_string(model.dim));
  return assign_pass(samples, model.centroids, model.k).labels;
}

std::vector<std::uint32_t> assign(const KMeansModel& model, const FilterBank& bank) {
  return assign(model, to_matrix(bank));
}

ClusterReport cluster_moments(const Matrix& x, std::span<const std::uint32_t> assignments,
                              std::size_t k) {
  if (assignments.size() != x.rows)
    fail(ErrorKind::kInput, "cluster_moments: " + std::to_string(assignments.size()) +
                                " assignments for " + std::to_string(x.rows) + " samples");
  const std::size_t d = x.cols;
  ClusterReport r;
  r.k = k;
  r.dim = d;
  r.assignments.assign(assignments.begin(), assignments.end());
  r.histogram.assign(k, 0);
  r.means.assign(k * d, 0.0);
  r.covariances.assign(k * d * d, 0.0);
  r.empty.assign(k, false);

  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto c = assignments[i];
    if (c >= k) fail(ErrorKind::kInput, "assignment " + std::to_string(c) + " out of range");
    ++r.histogram[c];
    for (std::size_t j = 0; j < d; ++j) r.means[c * d + j] += x(i, j);
  }
  for (std::size_t c = 0; c < k; ++c) {
    r.empty[c] = r.histogram[c] == 0;
    if (r.empty[c]) continue;
    for (std::size_t j = 0; j < d; ++j) r.means[c * d + j] /= static_cast<double>(r.histogram[c]);
  }
  // Second pass around the mean.
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto c = assignments[i];
    for (std::size_t j = 0; j < d; ++j) centered[j] = x(i, j) - r.means[c * d + j];
    double* cov = r.covariances.data() + c * d * d;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += centered[a] * centered[b];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (r.empty[c]) continue;
    double* cov = r.covariances.data() + c * d * d;
    const double n = static_cast<double>(r.histogram[c]);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) {
        cov[a * d + b] /= n;
        cov[b * d + a] = cov[a * d + b];
      }
  }
  return r;
}

ClusterReport cluster_moments(const FilterBank& bank, std::span<const std::uint32_t> assignments,
                              std::size_t k) {
  return cluster_moments(to_matrix(bank), assignments, k);
}

std::string render_mean_pgm(std::span<const double> mean) {
  if (mean.size() != 9) fail(ErrorKind::kInput, "PGM rendering needs a 9-vector");
  const auto [lo, hi] = std::minmax_element(mean.begin(), mean.end());
  std::string out = "P5\n3 3\n255\n";
  for (double v : mean) {
    unsigned char px = 128;
    if (*hi > *lo) px = static_cast<unsigned char>(std::lround(255.0 * (v - *lo) / (*hi - *lo)));
    out.push_back(static_cast<char>(px));
  }
  return out;
}

std::string render_matrix_csv(std::span<const double> values, std::size_t cols) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += format_real17(values[i]);
    out += (i + 1) % cols == 0 ? '\n' : ',';
  }
  return out;
}

std::string render_histogram_csv(std::span<const std::size_t> histogram) {
  std::string out;
  for (std::size_t c = 0; c < histogram.size(); ++c) {
    if (c) out += ',';
    out += std::to_string(histogram[c]);
  }
  out += '\n';
  return out;
}

ReportFiles render_report(const ClusterReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + out_dir.string() + "': " + ec.message());

  ReportFiles files;
  const bool grid = report.dim == 9;
  for (std::size_t c = 0; c < report.k; ++c) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "cluster_%03zu", c);
    const std::string base(stem);

    files.mean_csv.push_back(base + "_mean.csv");
    write_text_file(out_dir / files.mean_csv.back(),
                    render_matrix_csv(report.mean(c), grid ? 3 : report.dim));
    if (grid) {
      files.mean_pgm.push_back(base + "_mean.pgm");
      write_text_file(out_dir / files.mean_pgm.back(), render_mean_pgm(report.mean(c)));
    }
    files.covariance_csv.push_back(base + "_cov.csv");
    write_text_file(out_dir / files.covariance_csv.back(),
                    render_matrix_csv(report.covariance(c), report.dim));
  }
  files.histogram_csv = "histogram.csv";
  write_text_file(out_dir / files.histogram_csv, render_histogram_csv(report.histogram));
  return files;
}

}  // namespace fpreg
