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

// Independent reference computations for the tests. Nothing here calls into
// the library's numerics; formulas are re-derived directly, usually in long
// double, so the tests compare two separate code paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

using real = long double;

inline constexpr real kPi = 3.141592653589793238462643383279502884L;

// log N(w | mu, diag(var)) from the density itself: normaliser times exp.
inline real gaussian_logpdf(const std::vector<double>& w, const double* mu, const double* var) {
  real quad = 0, det = 1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const real d = static_cast<real>(w[i]) - mu[i];
    quad += d * d / var[i];
    det *= var[i];
  }
  const real norm = std::pow(2 * kPi, -static_cast<real>(w.size()) / 2) / std::sqrt(det);
  return std::log(norm * std::exp(-quad / 2));
}

struct Mixture {
  std::size_t dim = 0;
  std::vector<double> weights, means, variances;
  std::size_t k() const { return weights.size(); }
};

// Direct sum of weighted densities, no log-sum-exp.
inline real gmm_logpdf(const std::vector<double>& w, const Mixture& m) {
  real s = 0;
  for (std::size_t k = 0; k < m.k(); ++k)
    s += m.weights[k] * std::exp(gaussian_logpdf(w, &m.means[k * m.dim], &m.variances[k * m.dim]));
  return std::log(s);
}

inline std::vector<real> responsibilities(const std::vector<double>& w, const Mixture& m) {
  std::vector<real> p(m.k());
  real s = 0;
  for (std::size_t k = 0; k < m.k(); ++k) {
    p[k] = m.weights[k] * std::exp(gaussian_logpdf(w, &m.means[k * m.dim], &m.variances[k * m.dim]));
    s += p[k];
  }
  for (auto& v : p) v /= s;
  return p;
}

// Random diagonal mixture with well separated but overlapping components.
inline Mixture random_mixture(std::mt19937_64& gen, std::size_t k, std::size_t dim, double spread = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mixture m;
  m.dim = dim;
  real total = 0;
  for (std::size_t i = 0; i < k; ++i) {
    m.weights.push_back(0.1 + u(gen));
    total += m.weights.back();
  }
  for (auto& w : m.weights) w = static_cast<double>(w / total);
  for (std::size_t i = 0; i < k * dim; ++i) {
    m.means.push_back(spread * (2 * u(gen) - 1));
    m.variances.push_back(0.05 + 0.5 * u(gen));
  }
  return m;
}

// Brute-force nearest centroid, lowest index on ties.
inline std::size_t nearest(const double* x, const std::vector<double>& centroids, std::size_t dim) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t c = 0; c * dim < centroids.size(); ++c) {
    double d = 0;
    for (std::size_t j = 0; j < dim; ++j) d += (x[j] - centroids[c * dim + j]) * (x[j] - centroids[c * dim + j]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Textbook two-pass population covariance of the given rows.
inline std::vector<double> two_pass_covariance(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows.at(0).size();
  std::vector<real> mean(d, 0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (auto& v : mean) v /= rows.size();
  std::vector<double> cov(d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      real s = 0;
      for (const auto& r : rows) s += (r[a] - mean[a]) * (r[b] - mean[b]);
      cov[a * d + b] = static_cast<double>(s / rows.size());
    }
  return cov;
}

// Little-endian byte writer for building files by hand.
struct Bytes {
  std::vector<std::uint8_t> v;
  void u8(std::uint8_t x) { v.push_back(x); }
  void u16(std::uint16_t x) { for (int i = 0; i < 2; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i))); }
  void u32(std::uint32_t x) { for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i))); }
  void f32(float f) {
    std::uint32_t x;
    std::memcpy(&x, &f, 4);
    u32(x);
  }
  void str(const std::string& s) { v.insert(v.end(), s.begin(), s.end()); }
};

// Straightforward same-padded 3x3 convolution with explicit bounds checks.
inline std::vector<double> conv3x3(const std::vector<double>& in, std::size_t cin, std::size_t h, std::size_t w,
                                   const std::vector<double>& k, const std::vector<double>& b, std::size_t cout) {
  std::vector<double> out(cout * h * w);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        real s = b[o];
        for (std::size_t c = 0; c < cin; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long yy = static_cast<long>(y) + ky - 1, xx = static_cast<long>(x) + kx - 1;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              s += static_cast<real>(k[((o * cin + c) * 3 + ky) * 3 + kx]) * in[(c * h + yy) * w + xx];
            }
        out[(o * h + y) * w + x] = static_cast<double>(s);
      }
  return out;
}

inline std::vector<double> relu(std::vector<double> v) {
  for (auto& x : v) x = std::max(x, 0.0);
  return v;
}

inline std::vector<double> maxpool2(const std::vector<double>& in, std::size_t c, std::size_t h, std::size_t w) {
  std::vector<double> out(c * (h / 2) * (w / 2));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t x = 0; x < w / 2; ++x) {
        double m = -INFINITY;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) m = std::max(m, in[(ch * h + 2 * y + dy) * w + 2 * x + dx]);
        out[(ch * (h / 2) + y) * (w / 2) + x] = m;
      }
  return out;
}

inline std::vector<double> dense(const std::vector<double>& in, const std::vector<double>& wt,
                                 const std::vector<double>& b) {
  std::vector<double> out(b.size());
  for (std::size_t o = 0; o < b.size(); ++o) {
    real s = b[o];
    for (std::size_t i = 0; i < in.size(); ++i) s += static_cast<real>(wt[o * in.size() + i]) * in[i];
    out[o] = static_cast<double>(s);
  }
  return out;
}

inline real cross_entropy(const std::vector<double>& logits, std::size_t label) {
  real s = 0;
  for (double z : logits) s += std::exp(static_cast<real>(z));
  return std::log(s) - logits[label];
}

// Scratch directory removed at scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fpreg_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace oracle
