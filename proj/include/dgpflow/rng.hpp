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

#ifndef DGPFLOW_RNG_HPP_
#define DGPFLOW_RNG_HPP_

#include <cmath>
#include <cstdint>

#include "dgpflow/matrix.hpp"

namespace dgpflow {

// Counter-based generator: splitmix64 output function over a strided
// counter. Draw k after construction depends only on (seed, stream, k), so
// any substream can be reproduced without replaying earlier draws.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(mix(seed ^ 0x5DEECE66DULL) + stream)), state_(base_) {}

  // Child generator for a tagged substream. Derivation uses the parent's
  // identity, not its position, so splits commute with draws.
  SeededRng split(std::uint64_t stream_tag) const {
    SeededRng out(0);
    out.base_ = mix(base_ ^ mix(stream_tag + 0x632BE59BD9B4E019ULL));
    out.state_ = out.base_;
    return out;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

  // Standard normal via Box-Muller. Consumes exactly two draws and keeps
  // nothing back, so the stream position is a pure function of the call
  // count. The first uniform is shifted into (0, 1] to keep log finite.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Row-major matrix of standard normals; fill order is part of the
  // reproducibility contract.
  Matrix normal_matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
  // always tiny relative to 2^64 so the bias is unobservable.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t base_;
  std::uint64_t state_;
};

}  // namespace dgpflow

#endif  // DGPFLOW_RNG_HPP_
