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

#include <stdexcept>
#include <string>

namespace fpreg {

enum class ErrorKind {
  kFormat,      // bad magic, version or syntax
  kTruncated,   // payload ends early
  kValidation,  // well-formed but violates an invariant of the type
  kInput,       // bad argument (dimension mismatch, N < K, ...)
  kEmpty,       // an operation produced nothing, e.g. no 3x3 filters
  kSize,        // size constraint between inputs
  kConfig,      // run configuration incomplete or inconsistent
  kIo,          // filesystem failure
  kNumeric,     // non-finite values
  kInvariant,   // internal invariant violated at runtime
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace fpreg
