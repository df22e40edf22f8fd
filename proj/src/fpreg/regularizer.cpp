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

#include "fpreg/regularizer.hpp"

#include <span>

#include "fpreg/error.hpp"
#include "fpreg/gmm.hpp"

namespace fpreg {
namespace {

void check_model(const GaussianMixture* model, const RegConfig& cfg) {
  if (cfg.lambda < 0.0 || cfg.alpha < 0.0)
    fail(ErrorKind::kConfig, "lambda and alpha must be nonnegative");
  if (cfg.lambda != 0.0 && model == nullptr)
    fail(ErrorKind::kConfig, "lambda > 0 requires a mixture model");
  if (cfg.lambda != 0.0 && model->dim != 9)
    fail(ErrorKind::kConfig, "the mixture must be 9-dimensional to score 3x3 slices");
}

}  // namespace

NamedTensors zeros_like(const NamedTensors& params) {
  NamedTensors out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.shape, std::vector<double>(p.numel(), 0.0)});
  return out;
}

const NamedTensor* find_tensor(const NamedTensors& params, std::string_view name) {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

TensorArchive to_archive(const NamedTensors& params) {
  TensorArchive a;
  for (const auto& p : params) a.add({p.name, p.shape, std::vector<float>(p.values.begin(), p.values.end())});
  return a;
}

NamedTensors from_archive(const TensorArchive& archive) {
  NamedTensors out;
  for (const auto& t : archive.entries())
    out.push_back({t.name, t.shape, std::vector<double>(t.data.begin(), t.data.end())});
  return out;
}

GradientMode parse_gradient_mode(std::string_view text) {
  if (text == "approximate") return GradientMode::kApproximate;
  if (text == "exact") return GradientMode::kExact;
  fail(ErrorKind::kConfig, "gradient_mode must be 'approximate' or 'exact', got '" +
                               std::string(text) + "'");
}

const char* to_string(GradientMode mode) {
  return mode == GradientMode::kExact ? "exact" : "approximate";
}

bool in_scope(const NamedTensor& tensor, const RegConfig& cfg) {
  if (cfg.scope.empty()) return tensor.shape.size() == 4 && has_3x3_tail(tensor.shape);
  bool hit = false;
  for (const auto& p : cfg.scope) hit = hit || glob_match(p, tensor.name);
  if (hit && !has_3x3_tail(tensor.shape))
    fail(ErrorKind::kConfig, "regulariser scope selects '" + tensor.name +
                                 "', which has no trailing 3x3 dims");
  return hit;
}

double reg_loss(const NamedTensors& params, const GaussianMixture* model, const RegConfig& cfg) {
  check_model(model, cfg);
  if (cfg.lambda == 0.0) return 0.0;
  CompensatedSum total;
  for (const auto& p : params) {
    if (!in_scope(p, cfg)) continue;
    for (std::size_t s = 0; s < p.numel() / 9; ++s)
      total.add(nll(std::span<const double>(p.values.data() + 9 * s, 9), *model));
  }
  return cfg.lambda * total.value();
}

NamedTensors reg_grad(const NamedTensors& params, const GaussianMixture* model, const RegConfig& cfg) {
  check_model(model, cfg);
  NamedTensors out = zeros_like(params);
  if (cfg.lambda == 0.0) return out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    if (!in_scope(p, cfg)) continue;
    for (std::size_t s = 0; s < p.numel() / 9; ++s) {
      std::span<const double> w(p.values.data() + 9 * s, 9);
      const auto g = cfg.mode == GradientMode::kExact ? grad_exact(w, *model) : grad_approx(w, *model);
      for (std::size_t j = 0; j < 9; ++j) out[t].values[9 * s + j] = cfg.lambda * g[j];
    }
  }
  return out;
}

double half_squared_norm(const NamedTensors& params) {
  CompensatedSum s;
  for (const auto& p : params)
    for (double v : p.values) s.add(v * v);
  return 0.5 * s.value();
}

double total_objective(double class_loss, const NamedTensors& params, const GaussianMixture* model,
                       const RegConfig& cfg) {
  check_model(model, cfg);
  double total = class_loss;
  if (cfg.alpha != 0.0) total += cfg.alpha * half_squared_norm(params);
  if (cfg.lambda != 0.0) total += reg_loss(params, model, cfg);
  return total;
}

}  // namespace fpreg
