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

#include <Eigen/Eigenvalues>

#include "fpreg/error.hpp"
#include "fpreg/stats.hpp"
#include "oracles.hpp"

using namespace fpreg;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(n, d);
  for (auto& v : m.data) v = g(gen);
  return m;
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

}  // namespace

TEST_CASE("k=1 centroid is the sample mean") {
  const auto x = random_matrix(37, 9, 4);
  const auto m = kmeans_fit(x, 1, 0);
  for (std::size_t j = 0; j < 9; ++j) {
    oracle::real s = 0;
    for (std::size_t i = 0; i < x.rows; ++i) s += x(i, j);
    CHECK(m.centroid(0)[j] == doctest::Approx(static_cast<double>(s / x.rows)).epsilon(1e-13));
  }
}

TEST_CASE("k=N on distinct points has zero distortion") {
  const auto x = random_matrix(12, 9, 8);
  const auto m = kmeans_fit(x, 12, 3);
  CHECK(m.distortion == 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    bool found = false;
    for (std::size_t c = 0; c < 12; ++c)
      found = found || std::equal(x.row(i).begin(), x.row(i).end(), m.centroid(c).begin());
    CHECK(found);
  }
}

TEST_CASE("two separated blobs are recovered") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> noise(0.0, 0.1);
  Matrix x(40, 9);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 9; ++j) x(i, j) = (j == 0 ? (i < 20 ? 5.0 : -5.0) : 0.0) + noise(gen);
  const auto m = kmeans_fit(x, 2, 1);
  // Try both labelings of the blobs; keep the better one.
  double best = INFINITY;
  for (int flip = 0; flip < 2; ++flip) {
    double worst = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      const double cx = ((c == 0) != (flip == 1)) ? 5.0 : -5.0;
      for (std::size_t j = 0; j < 9; ++j)
        worst = std::max(worst, std::fabs(m.centroid(c)[j] - (j == 0 ? cx : 0.0)));
    }
    best = std::min(best, worst);
  }
  CHECK(best < 0.1);
}

TEST_CASE("distortion is the mean squared nearest distance and never increases") {
  const auto x = random_matrix(500, 9, 19);
  const auto m = kmeans_fit(x, 10, 5);
  oracle::real s = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto c = oracle::nearest(&x.data[i * 9], m.centroids, 9);
    for (std::size_t j = 0; j < 9; ++j) s += (x(i, j) - m.centroids[c * 9 + j]) * (x(i, j) - m.centroids[c * 9 + j]);
  }
  CHECK(m.distortion == doctest::Approx(static_cast<double>(s / x.rows)).epsilon(1e-12));
  for (std::size_t t = 1; t < m.distortion_trace.size(); ++t)
    CHECK(m.distortion_trace[t] <= m.distortion_trace[t - 1] * (1 + 1e-12));
  CHECK(m.distortion_trace.back() == m.distortion);
}

TEST_CASE("k-means is deterministic for a seed") {
  const auto x = random_matrix(300, 9, 2);
  const auto a = kmeans_fit(x, 7, 99), b = kmeans_fit(x, 7, 99);
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignments == b.assignments);
}

TEST_CASE("k-means input errors") {
  const auto x = random_matrix(5, 9, 1);
  CHECK(kind_of([&] { kmeans_fit(x, 6, 0); }) == ErrorKind::kInput);
  CHECK(kind_of([&] { kmeans_fit(Matrix(0, 9), 1, 0); }) == ErrorKind::kInput);
  auto bad = x;
  bad(2, 3) = NAN;
  CHECK(kind_of([&] { kmeans_fit(bad, 2, 0); }) == ErrorKind::kInput);
}

TEST_CASE("assign: exact hit, ties and brute force") {
  KMeansModel m;
  m.k = 5;
  m.dim = 2;
  m.centroids = {0, 0, -1, 0, 9, 9, 3, 3, 1, 0};
  Matrix p(2, 2);
  p(0, 0) = 3;
  p(0, 1) = 3;
  p(1, 0) = 0.0;  // equidistant from centroids 1 and 4, and 0 is closer
  p(1, 1) = 0.0;
  auto a = assign(m, p);
  CHECK(a[0] == 3);
  CHECK(a[1] == 0);
  m.centroids = {5, 5, -1, 0, 9, 9, 3, 3, 1, 0};
  CHECK(assign(m, p)[1] == 1);

  Matrix bad(1, 3);
  CHECK(kind_of([&] { assign(m, bad); }) == ErrorKind::kInput);

  const auto x = random_matrix(400, 9, 77);
  const auto fit = kmeans_fit(x, 8, 4);
  const auto got = assign(fit, x);
  for (std::size_t i = 0; i < x.rows; ++i) CHECK(got[i] == oracle::nearest(&x.data[i * 9], fit.centroids, 9));
  CHECK(got == fit.assignments);
}

TEST_CASE("cluster moments") {
  Matrix one(1, 9);
  for (std::size_t j = 0; j < 9; ++j) one(0, j) = static_cast<double>(j);
  const std::vector<std::uint32_t> a0 = {0};
  const auto r1 = cluster_moments(one, a0, 1);
  for (double v : r1.covariance(0)) CHECK(v == 0.0);

  Matrix line(2, 1);
  line(0, 0) = 0;
  line(1, 0) = 2;
  const std::vector<std::uint32_t> a1 = {0, 0};
  const auto r2 = cluster_moments(line, a1, 1);
  CHECK(r2.mean(0)[0] == 1.0);
  CHECK(r2.covariance(0)[0] == 1.0);

  const auto x = random_matrix(50, 9, 31, 2.0);
  std::vector<std::uint32_t> all(50, 1);
  const auto r3 = cluster_moments(x, all, 3);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < 50; ++i) rows.emplace_back(x.row(i).begin(), x.row(i).end());
  const auto cov = oracle::two_pass_covariance(rows);
  for (std::size_t i = 0; i < 81; ++i) CHECK(r3.covariance(1)[i] == doctest::Approx(cov[i]).epsilon(1e-12));
  CHECK(r3.empty[0]);
  CHECK(r3.empty[2]);
  CHECK(!r3.empty[1]);
  for (double v : r3.mean(0)) CHECK(v == 0.0);
  CHECK(r3.histogram == std::vector<std::size_t>{0, 50, 0});
}

TEST_CASE("covariances are symmetric and positive semidefinite") {
  const auto x = random_matrix(2000, 9, 8, 0.5);
  const auto fit = kmeans_fit(x, 10, 2);
  const auto r = cluster_moments(x, fit.assignments, 10);
  std::size_t total = 0;
  for (std::size_t c = 0; c < 10; ++c) {
    total += r.histogram[c];
    Eigen::Matrix<double, 9, 9> m;
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) m(i, j) = r.covariance(c)[i * 9 + j];
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(m);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
  CHECK(total == x.rows);
}

TEST_CASE("pgm rendering") {
  const std::vector<double> zero(9, 0.0);
  const auto flat = render_mean_pgm(zero);
  REQUIRE(flat.size() == 11 + 9);
  CHECK(flat.substr(0, 11) == "P5\n3 3\n255\n");
  for (std::size_t i = 11; i < 20; ++i) CHECK(static_cast<unsigned char>(flat[i]) == 128);

  std::vector<double> last(9, 0.0);
  last[8] = 1.0;
  const auto img = render_mean_pgm(last);
  for (std::size_t i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(img[11 + i]) == 0);
  CHECK(static_cast<unsigned char>(img[19]) == 255);
}

TEST_CASE("histogram csv and report files") {
  CHECK(render_histogram_csv(std::vector<std::size_t>{2, 1, 0}) == "2,1,0\n");
  Matrix x(3, 9);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 9; ++j) x(i, j) = static_cast<double>(i + j);
  const std::vector<std::uint32_t> a = {0, 0, 1};
  const auto r = cluster_moments(x, a, 3);
  CHECK(r.histogram == std::vector<std::size_t>{2, 1, 0});

  oracle::TempDir dir("stats_report");
  const auto files = render_report(r, dir.path());
  CHECK(files.mean_csv.size() == 3);
  CHECK(files.mean_pgm.size() == 3);
  CHECK(files.covariance_csv.size() == 3);
  CHECK(oracle::slurp(dir / "histogram.csv") == "2,1,0\n");
  const auto grid = oracle::slurp(dir.path() / files.mean_csv[1]);
  CHECK(grid == "2,3,4\n5,6,7\n8,9,10\n");
  const auto again = render_report(r, dir.path());
  CHECK(oracle::slurp(dir.path() / files.covariance_csv[0]) == render_matrix_csv(r.covariance(0), 9));
}
