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

// Tensor archives (TARC), filter banks (FBNK + metadata sidecar) and the
// mixture text format. All binary formats are little-endian regardless of
// host byte order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpreg/mixture.hpp"

namespace fpreg {

using Shape = std::vector<std::uint32_t>;

std::size_t shape_numel(const Shape& shape);

struct Tensor {
  std::string name;
  Shape shape;
  std::vector<float> data;  // row-major

  std::size_t numel() const { return shape_numel(shape); }
  bool operator==(const Tensor&) const = default;
};

class TensorArchive {
 public:
  TensorArchive() = default;

  // Appends a tensor; kValidation on a duplicate name or a data length that
  // does not match the shape.
  void add(Tensor tensor);

  const std::vector<Tensor>& entries() const { return entries_; }
  const Tensor* find(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool operator==(const TensorArchive&) const = default;

 private:
  std::vector<Tensor> entries_;
};

inline constexpr std::uint32_t kTarcVersion = 1;
inline constexpr std::uint32_t kFbankVersion = 1;
inline constexpr int kGmmFormatVersion = 1;

std::vector<std::uint8_t> encode_tarc(const TensorArchive& archive);
TensorArchive decode_tarc(std::span<const std::uint8_t> bytes);
void write_tarc(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive read_tarc(const std::filesystem::path& path);

// Where a filter came from: the tensor name plus the output-channel index and
// the (flattened) remaining leading index.
struct FilterMeta {
  std::string tensor;
  std::uint32_t out_index = 0;
  std::uint32_t in_index = 0;

  bool operator==(const FilterMeta&) const = default;
};

// N vectors of equal dimension (9 for 3x3 kernels) stored as 32-bit reals.
class FilterBank {
 public:
  explicit FilterBank(std::size_t dim = 9) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return meta_.size(); }
  bool empty() const { return meta_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  const FilterMeta& meta(std::size_t i) const { return meta_[i]; }
  const std::vector<float>& values() const { return values_; }

  void append(std::span<const float> v, FilterMeta meta = {});
  void append(std::span<const double> v, FilterMeta meta = {});

  bool operator==(const FilterBank&) const = default;

 private:
  std::size_t dim_;
  std::vector<float> values_;
  std::vector<FilterMeta> meta_;
};

struct ExtractOptions {
  // Glob patterns over tensor names; an empty include list selects all.
  std::vector<std::string> include;
  std::vector<std::string> exclude;
};

bool glob_match(std::string_view pattern, std::string_view name);

// True for rank >= 2 tensors whose last two dims are (3, 3).
bool has_3x3_tail(const Shape& shape);

// Number of 3x3 slices a tensor of this shape contributes (0 if it does not
// qualify).
std::size_t filter_count(const Shape& shape);

bool tensor_selected(std::string_view name, const ExtractOptions& options);

// Every 3x3 slice of every qualifying tensor, in archive order and then
// lexicographic leading-index order, flattened row-major. kEmpty when no
// tensor qualifies.
FilterBank extract_filters(const TensorArchive& archive,
                           const ExtractOptions& options = {});

std::vector<std::uint8_t> encode_fbank(const FilterBank& bank);
FilterBank decode_fbank(std::span<const std::uint8_t> bytes,
                        bool* nonstandard_dim = nullptr);

std::filesystem::path fbank_sidecar_path(const std::filesystem::path& path);

// Writes the FBNK payload and a JSON-lines metadata sidecar next to it.
void write_fbank(const FilterBank& bank, const std::filesystem::path& path);

// Reads the payload and, when present, the sidecar. nonstandard_dim is set
// when dim != 9 (accepted; the format is generic).
FilterBank read_fbank(const std::filesystem::path& path,
                      bool* nonstandard_dim = nullptr);

std::string encode_gmm(const GaussianMixture& model);
GaussianMixture decode_gmm(std::string_view text);
void write_gmm(const GaussianMixture& model, const std::filesystem::path& path);
GaussianMixture read_gmm(const std::filesystem::path& path);

// Whole-file helpers.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace fpreg
