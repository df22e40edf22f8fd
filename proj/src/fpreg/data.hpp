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

// Image classification datasets: the CIFAR-10 binary layout and a seeded
// synthetic generator of Gaussian-blob classes.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fpreg {

enum class Split { kTrain, kTest };

struct Dataset {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  Split split = Split::kTrain;
  std::vector<float> images;  // N x C x H x W, values in [0, 1]
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t example_size() const { return channels * height * width; }
  std::span<const float> image(std::size_t i) const {
    return {images.data() + i * example_size(), example_size()};
  }
  // Throws kValidation on inconsistent lengths or out-of-range labels.
  void validate() const;
  // First n examples (or all if n == 0 or n >= size()).
  Dataset head(std::size_t n) const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

// One CIFAR-10 binary batch: records of 1 label byte and 3072 pixel bytes
// (R, G, B planes of 32x32). kFormat unless the size is a multiple of 3073.
Dataset load_cifar10_batch(const std::filesystem::path& file, Split split);

// data_batch_1..5.bin and test_batch.bin from dir, truncated to the first
// train_limit / test_limit examples (0 keeps all).
struct CifarSplits {
  Dataset train;
  Dataset test;
};
CifarSplits load_cifar10(const std::filesystem::path& dir, std::size_t train_limit = 0,
                         std::size_t test_limit = 0);

struct SynthSpec {
  std::size_t classes = 2;
  std::size_t per_class = 100;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.1;       // per-pixel Gaussian noise std
  double jitter = 1.0;      // per-example blob centre jitter, in pixels
  std::uint64_t prototype_seed = 1;  // shared by train and test draws
};

// Each class is a fixed arrangement of per-channel Gaussian blobs drawn from
// prototype_seed; each example jitters the blob centres and adds pixel noise
// from seed. Examples are interleaved by class (0, 1, ..., 0, 1, ...).
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed, Split split = Split::kTrain);

}  // namespace fpreg
