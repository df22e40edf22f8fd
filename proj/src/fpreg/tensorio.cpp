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

#include "fpreg/tensorio.hpp"

#include <fnmatch.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "fpreg/error.hpp"

namespace fpreg {
namespace {

constexpr char kTarcMagic[4] = {'T', 'A', 'R', 'C'};
constexpr char kFbankMagic[4] = {'F', 'B', 'N', 'K'};

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n)
      fail(ErrorKind::kTruncated, std::string(what_) + ": truncated payload at byte " +
                                      std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return bytes(1)[0]; }
  std::uint16_t u16() {
    auto b = bytes(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    auto b = bytes(4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* what_;
};

void check_magic(ByteReader& r, const char (&magic)[4], const char* what) {
  if (r.remaining() < 4) fail(ErrorKind::kFormat, std::string(what) + ": file too short for magic");
  auto m = r.bytes(4);
  for (int i = 0; i < 4; ++i)
    if (m[i] != static_cast<std::uint8_t>(magic[i]))
      fail(ErrorKind::kFormat, std::string(what) + ": bad magic");
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kTruncated: return "truncation error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kEmpty: return "empty result";
    case ErrorKind::kSize: return "size constraint";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kNumeric: return "numeric fault";
    case ErrorKind::kInvariant: return "invariant violation";
  }
  return "error";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void TensorArchive::add(Tensor tensor) {
  if (find(tensor.name) != nullptr)
    fail(ErrorKind::kValidation, "duplicate tensor name '" + tensor.name + "'");
  if (tensor.name.size() > 0xFFFF)
    fail(ErrorKind::kValidation, "tensor name longer than 65535 bytes");
  if (tensor.shape.size() > 0xFF)
    fail(ErrorKind::kValidation, "tensor '" + tensor.name + "' has rank > 255");
  for (auto d : tensor.shape)
    if (d == 0) fail(ErrorKind::kValidation, "tensor '" + tensor.name + "' has a zero dimension");
  if (tensor.data.size() != tensor.numel())
    fail(ErrorKind::kValidation, "tensor '" + tensor.name + "': data length " +
                                     std::to_string(tensor.data.size()) +
                                     " does not match shape product " +
                                     std::to_string(tensor.numel()));
  entries_.push_back(std::move(tensor));
}

const Tensor* TensorArchive::find(std::string_view name) const {
  for (const auto& t : entries_)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_tarc(const TensorArchive& archive) {
  ByteWriter w;
  w.bytes(kTarcMagic, 4);
  w.u32(kTarcVersion);
  w.u32(static_cast<std::uint32_t>(archive.size()));
  for (const auto& t : archive.entries()) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

TensorArchive decode_tarc(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "TARC");
  check_magic(r, kTarcMagic, "TARC");
  if (r.remaining() < 8) fail(ErrorKind::kTruncated, "TARC: truncated header");
  const auto version = r.u32();
  if (version != kTarcVersion)
    fail(ErrorKind::kFormat, "TARC: unsupported version " + std::to_string(version));
  const auto count = r.u32();
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    const auto name_len = r.u16();
    auto name = r.bytes(name_len);
    t.name.assign(name.begin(), name.end());
    const auto rank = r.u8();
    t.shape.resize(rank);
    for (auto& d : t.shape) d = r.u32();
    const std::size_t n = shape_numel(t.shape);
    // Guard the allocation against absurd shapes in corrupt files.
    if (n > r.remaining() / 4) r.need(n * 4);
    t.data.resize(n);
    for (auto& v : t.data) v = r.f32();
    archive.add(std::move(t));
  }
  if (r.remaining() != 0)
    fail(ErrorKind::kFormat, "TARC: " + std::to_string(r.remaining()) + " trailing bytes");
  return archive;
}

void write_tarc(const TensorArchive& archive, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tarc(archive));
}

TensorArchive read_tarc(const std::filesystem::path& path) {
  return decode_tarc(read_file_bytes(path));
}

void FilterBank::append(std::span<const float> v, FilterMeta meta) {
  if (v.size() != dim_)
    fail(ErrorKind::kInput, "filter of length " + std::to_string(v.size()) +
                                " appended to a bank of dim " + std::to_string(dim_));
  values_.insert(values_.end(), v.begin(), v.end());
  meta_.push_back(std::move(meta));
}

void FilterBank::append(std::span<const double> v, FilterMeta meta) {
  std::vector<float> f(v.begin(), v.end());
  append(std::span<const float>(f), std::move(meta));
}

bool glob_match(std::string_view pattern, std::string_view name) {
  return ::fnmatch(std::string(pattern).c_str(), std::string(name).c_str(), 0) == 0;
}

bool has_3x3_tail(const Shape& shape) {
  const auto r = shape.size();
  return r >= 2 && shape[r - 1] == 3 && shape[r - 2] == 3;
}

std::size_t filter_count(const Shape& shape) {
  return has_3x3_tail(shape) ? shape_numel(shape) / 9 : 0;
}

bool tensor_selected(std::string_view name, const ExtractOptions& options) {
  bool in = options.include.empty();
  for (const auto& p : options.include) in = in || glob_match(p, name);
  if (!in) return false;
  for (const auto& p : options.exclude)
    if (glob_match(p, name)) return false;
  return true;
}

FilterBank extract_filters(const TensorArchive& archive, const ExtractOptions& options) {
  FilterBank bank(9);
  bool any = false;
  for (const auto& t : archive.entries()) {
    if (!has_3x3_tail(t.shape) || !tensor_selected(t.name, options)) continue;
    any = true;
    const std::size_t slices = filter_count(t.shape);
    // Leading indices: the first is the output channel, the remaining ones are
    // flattened into the input index.
    const std::size_t per_out = t.shape.size() > 2 ? slices / t.shape[0] : 1;
    for (std::size_t s = 0; s < slices; ++s) {
      FilterMeta m{t.name, static_cast<std::uint32_t>(s / per_out),
                   static_cast<std::uint32_t>(s % per_out)};
      bank.append(std::span<const float>(t.data.data() + s * 9, 9), std::move(m));
    }
  }
  if (!any) fail(ErrorKind::kEmpty, "archive contains no selected tensor with trailing 3x3 dims");
  return bank;
}

std::vector<std::uint8_t> encode_fbank(const FilterBank& bank) {
  ByteWriter w;
  w.bytes(kFbankMagic, 4);
  w.u32(kFbankVersion);
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  for (float v : bank.values()) w.f32(v);
  return w.take();
}

FilterBank decode_fbank(std::span<const std::uint8_t> bytes, bool* nonstandard_dim) {
  ByteReader r(bytes, "FBNK");
  check_magic(r, kFbankMagic, "FBNK");
  if (r.remaining() < 12) fail(ErrorKind::kTruncated, "FBNK: truncated header");
  const auto version = r.u32();
  if (version != kFbankVersion)
    fail(ErrorKind::kFormat, "FBNK: unsupported version " + std::to_string(version));
  const std::size_t n = r.u32();
  const std::size_t dim = r.u32();
  if (dim == 0) fail(ErrorKind::kFormat, "FBNK: dim must be positive");
  if (nonstandard_dim) *nonstandard_dim = dim != 9;
  if (n > r.remaining() / (4 * dim)) r.need(n * dim * 4);
  FilterBank bank(dim);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = r.f32();
    bank.append(std::span<const float>(row));
  }
  if (r.remaining() != 0)
    fail(ErrorKind::kFormat, "FBNK: " + std::to_string(r.remaining()) + " trailing bytes");
  return bank;
}

std::filesystem::path fbank_sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta";
  return p;
}

void write_fbank(const FilterBank& bank, const std::filesystem::path& path) {
  write_file_bytes(path, encode_fbank(bank));
  std::string meta;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& m = bank.meta(i);
    nlohmann::ordered_json rec;
    rec["tensor"] = m.tensor;
    rec["out"] = m.out_index;
    rec["in"] = m.in_index;
    meta += rec.dump();
    meta += '\n';
  }
  write_text_file(fbank_sidecar_path(path), meta);
}

FilterBank read_fbank(const std::filesystem::path& path, bool* nonstandard_dim) {
  FilterBank payload = decode_fbank(read_file_bytes(path), nonstandard_dim);
  const auto sidecar = fbank_sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) return payload;

  std::ifstream in(sidecar);
  std::vector<FilterMeta> meta;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      meta.push_back({rec.at("tensor").get<std::string>(), rec.at("out").get<std::uint32_t>(),
                      rec.at("in").get<std::uint32_t>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, sidecar.string() + ": bad metadata record: " + e.what());
    }
  }
  if (meta.size() != payload.size())
    fail(ErrorKind::kValidation, sidecar.string() + ": " + std::to_string(meta.size()) +
                                     " metadata rows for " + std::to_string(payload.size()) +
                                     " filters");
  FilterBank bank(payload.dim());
  for (std::size_t i = 0; i < payload.size(); ++i) bank.append(payload.row(i), meta[i]);
  return bank;
}

// Mixture text layout, one field per line:
//
//   fpreg-gmm
//   version 1
//   dim <d>
//   K <k>
//   weights <k reals>
//   means
//   <k lines of d reals>
//   variances
//   <k lines of d reals>
std::string encode_gmm(const GaussianMixture& model) {
  model.validate(1e-9, 0.0);
  const std::size_t k = model.components();
  std::string out = "fpreg-gmm\n";
  out += "version " + std::to_string(kGmmFormatVersion) + "\n";
  out += "dim " + std::to_string(model.dim) + "\n";
  out += "K " + std::to_string(k) + "\n";
  out += "weights";
  for (double w : model.weights) out += " " + format_real(w);
  out += "\n";
  auto rows = [&](const char* label, const std::vector<double>& v) {
    out += label;
    out += "\n";
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < model.dim; ++j) {
        if (j) out += ' ';
        out += format_real(v[c * model.dim + j]);
      }
      out += "\n";
    }
  };
  rows("means", model.means);
  rows("variances", model.variances);
  return out;
}

GaussianMixture decode_gmm(std::string_view text) {
  std::istringstream in{std::string(text)};
  auto expect = [&](const char* key) {
    std::string tok;
    if (!(in >> tok) || tok != key)
      fail(ErrorKind::kFormat, std::string("GMM: expected '") + key + "', got '" + tok + "'");
  };
  auto integer = [&](const char* key) -> std::size_t {
    expect(key);
    long long v = 0;
    if (!(in >> v) || v < 0) fail(ErrorKind::kFormat, std::string("GMM: bad value for ") + key);
    return static_cast<std::size_t>(v);
  };
  auto real = [&]() -> double {
    std::string tok;
    if (!(in >> tok)) fail(ErrorKind::kTruncated, "GMM: unexpected end of document");
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      fail(ErrorKind::kFormat, "GMM: bad real '" + tok + "'");
    return v;
  };

  expect("fpreg-gmm");
  const auto version = integer("version");
  if (version != static_cast<std::size_t>(kGmmFormatVersion))
    fail(ErrorKind::kFormat, "GMM: unsupported version " + std::to_string(version));
  GaussianMixture m;
  m.dim = integer("dim");
  const auto k = integer("K");
  if (m.dim == 0 || k == 0) fail(ErrorKind::kValidation, "GMM: dim and K must be positive");
  expect("weights");
  m.weights.resize(k);
  for (auto& w : m.weights) w = real();
  expect("means");
  m.means.resize(k * m.dim);
  for (auto& v : m.means) v = real();
  expect("variances");
  m.variances.resize(k * m.dim);
  for (auto& v : m.variances) v = real();
  std::string extra;
  if (in >> extra) fail(ErrorKind::kFormat, "GMM: trailing content '" + extra + "'");
  m.validate(1e-9, 0.0);
  return m;
}

void write_gmm(const GaussianMixture& model, const std::filesystem::path& path) {
  write_text_file(path, encode_gmm(model));
}

GaussianMixture read_gmm(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return decode_gmm(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace fpreg
