// Copyright 2026 The dgpflow Authors. All Rights Reserved.
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

#ifndef DGPFLOW_ERRORS_HPP_
#define DGPFLOW_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dgpflow {

// Root of the library's exception hierarchy. Everything thrown on purpose
// derives from this; anything else escaping the library is a bug.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Matrix failed to factorize even after the jitter ladder was exhausted.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

// Pivot or triangular diagonal below the singularity floor.
class Singular : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not conform.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (bad sizes, unknown options, M > N, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value that must be finite came out NaN or infinite. Carries the
// training iteration when raised from the optimizer loop, else -1.
class NonFinite : public Error {
 public:
  explicit NonFinite(const std::string& what, long iteration = -1)
      : Error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

// Malformed data file; message names the offending row and column.
class ParseError : public Error {
 public:
  using Error::Error;
};

// No usable rows survived ingestion.
class EmptyDataset : public Error {
 public:
  using Error::Error;
};

// Fewer rows than the operation can split or fit.
class TooFewRows : public Error {
 public:
  using Error::Error;
};

// Data supplied at evaluation time does not match the checkpoint's schema.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is corrupt or from an unknown version.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgpflow

#endif  // DGPFLOW_ERRORS_HPP_
