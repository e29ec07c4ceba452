// Copyright 2026 The FTTA Authors.
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

#ifndef FTTA_ERRORS_H_
#define FTTA_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftta {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when two operands have incompatible shapes. Carries both shapes.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, Shape lhs, Shape rhs);

  const Shape& lhs() const { return lhs_; }
  const Shape& rhs() const { return rhs_; }

 private:
  Shape lhs_;
  Shape rhs_;
};

// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kTruncated, kCountMismatch, kBadVersion, kBadValue };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace ftta

#endif  // FTTA_ERRORS_H_
