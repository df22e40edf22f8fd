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
#include <string>
#include <string_view>
#include <vector>

#include "fpreg/tensorio.hpp"

namespace fpreg {

// A trainable parameter tensor in 64-bit precision.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  std::size_t numel() const { return values.size(); }
  bool operator==(const NamedTensor&) const = default;
};

using NamedTensors = std::vector<NamedTensor>;

// Same names and shapes, all zeros.
NamedTensors zeros_like(const NamedTensors& params);

const NamedTensor* find_tensor(const NamedTensors& params, std::string_view name);

// Narrowing conversions to and from the 32-bit archive format.
TensorArchive to_archive(const NamedTensors& params);
NamedTensors from_archive(const TensorArchive& archive);

}  // namespace fpreg
