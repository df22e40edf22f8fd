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

// The statistical regulariser: lambda * sum over scoped 3x3 slices of
// -log P(slice), plus weight decay, assembled into the full training
// objective.

#pragma once

#include <string>
#include <vector>

#include "fpreg/mixture.hpp"
#include "fpreg/params.hpp"

namespace fpreg {

enum class GradientMode { kApproximate, kExact };

GradientMode parse_gradient_mode(std::string_view text);
const char* to_string(GradientMode mode);

struct RegConfig {
  double lambda = 0.0;
  double alpha = 0.0;
  GradientMode mode = GradientMode::kApproximate;
  // Glob patterns over parameter names. Empty: every rank-4 tensor whose
  // trailing dims are (3, 3), i.e. every 3x3 convolution weight.
  std::vector<std::string> scope;
};

// True if the tensor receives R under cfg. Throws kConfig when a pattern
// selects a tensor without trailing (3, 3) dims.
bool in_scope(const NamedTensor& tensor, const RegConfig& cfg);

// lambda * sum of nll over every scoped slice. Zero without touching the
// model when lambda == 0.
double reg_loss(const NamedTensors& params, const GaussianMixture* model, const RegConfig& cfg);

// Per-slice lambda * gradient, aligned with params; zero for unscoped tensors.
NamedTensors reg_grad(const NamedTensors& params, const GaussianMixture* model,
                      const RegConfig& cfg);

// 0.5 * sum of squares over all parameters.
double half_squared_norm(const NamedTensors& params);

// class_loss + alpha/2 |w|^2 + reg_loss.
double total_objective(double class_loss, const NamedTensors& params, const GaussianMixture* model,
                       const RegConfig& cfg);

}  // namespace fpreg
