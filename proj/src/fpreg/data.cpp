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

#include "fpreg/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpreg/error.hpp"
#include "fpreg/numeric.hpp"
#include "fpreg/tensorio.hpp"

namespace fpreg {

void Dataset::validate() const {
  if (images.size() != labels.size() * example_size())
    fail(ErrorKind::kValidation, "dataset image buffer does not match its label count");
  for (auto l : labels)
    if (l >= classes) fail(ErrorKind::kValidation, "label " + std::to_string(l) + " out of range");
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  Dataset d = *this;
  d.labels.resize(n);
  d.images.resize(n * example_size());
  return d;
}

Dataset load_cifar10_batch(const std::filesystem::path& file, Split split) {
  const auto bytes = read_file_bytes(file);
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0)
    fail(ErrorKind::kFormat, file.string() + ": size " + std::to_string(bytes.size()) +
                                 " is not a multiple of " + std::to_string(kCifarRecordBytes));
  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.classes = 10;
  d.split = split;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  d.labels.resize(n);
  d.images.resize(n * 3072);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] >= 10)
      fail(ErrorKind::kFormat, file.string() + ": record " + std::to_string(i) + " has label " +
                                   std::to_string(rec[0]));
    d.labels[i] = rec[0];
    for (std::size_t p = 0; p < 3072; ++p) d.images[i * 3072 + p] = static_cast<float>(rec[1 + p]) / 255.0f;
  }
  return d;
}

CifarSplits load_cifar10(const std::filesystem::path& dir, std::size_t train_limit,
                         std::size_t test_limit) {
  CifarSplits out;
  out.train = {3, 32, 32, 10, Split::kTrain, {}, {}};
  for (int b = 1; b <= 5; ++b) {
    if (train_limit != 0 && out.train.size() >= train_limit) break;
    const auto part = load_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), Split::kTrain);
    out.train.images.insert(out.train.images.end(), part.images.begin(), part.images.end());
    out.train.labels.insert(out.train.labels.end(), part.labels.begin(), part.labels.end());
  }
  out.train = out.train.head(train_limit);
  out.test = load_cifar10_batch(dir / "test_batch.bin", Split::kTest).head(test_limit);
  return out;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed, Split split) {
  if (spec.classes == 0 || spec.channels == 0 || spec.height == 0 || spec.width == 0)
    fail(ErrorKind::kInput, "synthetic dataset dimensions must be positive");

  // Class prototypes: one blob per (class, channel) with centre, width and
  // amplitude drawn from the prototype seed.
  struct Blob {
    double cy, cx, sigma, amp;
  };
  Rng proto(spec.prototype_seed);
  std::vector<Blob> blobs(spec.classes * spec.channels);
  for (auto& b : blobs) {
    b.cy = proto.uniform() * static_cast<double>(spec.height - 1);
    b.cx = proto.uniform() * static_cast<double>(spec.width - 1);
    b.sigma = 0.6 + proto.uniform() * 0.15 * static_cast<double>(std::min(spec.height, spec.width));
    b.amp = 0.5 + 0.5 * proto.uniform();
  }

  Dataset d;
  d.channels = spec.channels;
  d.height = spec.height;
  d.width = spec.width;
  d.classes = spec.classes;
  d.split = split;
  const std::size_t n = spec.classes * spec.per_class;
  d.labels.resize(n);
  d.images.resize(n * d.example_size());

  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint32_t>(i % spec.classes);
    d.labels[i] = label;
    const double dy = spec.jitter * rng.normal();
    const double dx = spec.jitter * rng.normal();
    float* img = d.images.data() + i * d.example_size();
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const Blob& b = blobs[label * spec.channels + c];
      for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double ry = static_cast<double>(y) - (b.cy + dy);
          const double rx = static_cast<double>(x) - (b.cx + dx);
          double v = b.amp * std::exp(-(ry * ry + rx * rx) / (2.0 * b.sigma * b.sigma));
          v += spec.noise * rng.normal();
          img[(c * spec.height + y) * spec.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
  }
  return d;
}

}  // namespace fpreg
