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

#ifndef DGPFLOW_LINALG_HPP_
#define DGPFLOW_LINALG_HPP_

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "dgpflow/matrix.hpp"
#include "dgpflow/tape.hpp"

namespace dgpflow {

inline constexpr double kLog2Pi = 1.8378770664093453;
inline constexpr double kPivotFloor = 1e-300;

namespace detail {

// One factorization attempt with a fixed diagonal shift. Returns false on a
// non-positive pivot instead of throwing so the caller can escalate.
template <class T>
bool try_cholesky(const Mat<T>& a, double shift, Mat<T>* out) {
  const std::size_t n = a.rows();
  Mat<T> l(n, n, zero_like(a(0, 0)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      T s = (i == j && shift != 0.0) ? a(i, j) + shift : a(i, j);
      for (std::size_t k = 0; k < j; ++k) s = s - l(i, k) * l(j, k);
      if (i == j) {
        if (!(value_of(s) > 0.0)) return false;
        l(i, i) = sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  *out = l;
  return true;
}

}  // namespace detail

// Lower Cholesky factor of A + jitter*I. The requested jitter is applied
// as-is; on failure the shift escalates through the rungs of
// {1e-8, 1e-6, 1e-4} that exceed it before giving up.
template <class T>
Mat<T> cholesky(const Mat<T>& a, double jitter = 0.0) {
  check_shape(a.rows() == a.cols() && a.rows() > 0, "cholesky: square input");
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::fabs(value_of(a(i, j)) - value_of(a(j, i))) > 1e-10)
        throw Error("cholesky: input not symmetric");

  Mat<T> l;
  if (detail::try_cholesky(a, jitter, &l)) return l;
  for (double rung : {1e-8, 1e-6, 1e-4}) {
    if (rung <= jitter) continue;
    if (detail::try_cholesky(a, rung, &l)) return l;
  }
  throw NotPositiveDefinite(
      "cholesky: not positive definite at jitter 1e-4 (n=" +
      std::to_string(n) + ")");
}

enum class Tri { kLower, kUpper };

// Solve T X = B for triangular T by substitution, column by column.
template <class T>
Mat<T> solve_triangular(const Mat<T>& t, const Mat<T>& b, Tri side) {
  const std::size_t n = t.rows();
  check_shape(t.rows() == t.cols(), "solve_triangular: square input");
  check_shape(b.rows() == n, "solve_triangular: rhs rows");
  for (std::size_t i = 0; i < n; ++i)
    if (std::fabs(value_of(t(i, i))) < kPivotFloor)
      throw Singular("solve_triangular: zero diagonal at " +
                     std::to_string(i));

  Mat<T> x = b;
  const std::size_t m = b.cols();
  if (side == Tri::kLower) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        T s = x(i, j);
        for (std::size_t k = 0; k < i; ++k) s = s - t(i, k) * x(k, j);
        x(i, j) = s / t(i, i);
      }
    }
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t ii = n; ii-- > 0;) {
        T s = x(ii, j);
        for (std::size_t k = ii + 1; k < n; ++k) s = s - t(ii, k) * x(k, j);
        x(ii, j) = s / t(ii, ii);
      }
    }
  }
  return x;
}

template <class T>
struct LuFactors {
  Mat<T> lu;                  // packed L (unit diagonal) and U
  std::vector<std::size_t> perm;  // row permutation applied to the input
  int sign = 1;               // permutation parity
};

// LU with partial pivoting (Doolittle). Pivot selection compares values, so
// the same branches are taken on the double and Var instantiations of one
// computation.
template <class T>
LuFactors<T> lu_factor(const Mat<T>& a) {
  check_shape(a.rows() == a.cols() && a.rows() > 0, "lu_factor: square input");
  const std::size_t n = a.rows();
  LuFactors<T> f{a, std::vector<std::size_t>(n), 1};
  std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::fabs(value_of(f.lu(k, k)));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::fabs(value_of(f.lu(i, k)));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best < kPivotFloor)
      throw Singular("lu_factor: pivot below floor at column " +
                     std::to_string(k));
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
      f.sign = -f.sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      T m = f.lu(i, k) / f.lu(k, k);
      f.lu(i, k) = m;
      for (std::size_t j = k + 1; j < n; ++j)
        f.lu(i, j) = f.lu(i, j) - m * f.lu(k, j);
    }
  }
  return f;
}

template <class T>
struct LogDet {
  int sign;
  T log_abs;
};

// (sign, log|det A|) through the pivoted LU above. Throws Singular when any
// pivot magnitude falls below 1e-300.
template <class T>
LogDet<T> lu_logdet(const Mat<T>& a) {
  LuFactors<T> f = lu_factor(a);
  const std::size_t n = a.rows();
  T acc = logabs(f.lu(0, 0));
  int sign = f.sign * (value_of(f.lu(0, 0)) < 0.0 ? -1 : 1);
  for (std::size_t i = 1; i < n; ++i) {
    acc = acc + logabs(f.lu(i, i));
    if (value_of(f.lu(i, i)) < 0.0) sign = -sign;
  }
  return LogDet<T>{sign, acc};
}

// Solve A X = B via the factors: apply the row permutation, then the two
// triangular sweeps with L's implicit unit diagonal.
template <class T>
Mat<T> lu_solve(const LuFactors<T>& f, const Mat<T>& b) {
  const std::size_t n = f.lu.rows();
  check_shape(b.rows() == n, "lu_solve: rhs rows");
  const std::size_t m = b.cols();
  Mat<T> x(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) x(i, j) = b(f.perm[i], j);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 1; i < n; ++i) {
      T s = x(i, j);
      for (std::size_t k = 0; k < i; ++k) s = s - f.lu(i, k) * x(k, j);
      x(i, j) = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      T s = x(ii, j);
      for (std::size_t k = ii + 1; k < n; ++k) s = s - f.lu(ii, k) * x(k, j);
      x(ii, j) = s / f.lu(ii, ii);
    }
  }
  return x;
}

// log N(y | mean, variance) for scalars.
template <class T, class U, class V>
auto normal_logpdf(const T& y, const U& mean, const V& variance) {
  auto r = y - mean;
  return -0.5 * (kLog2Pi + log(variance)) - r * r / (2.0 * variance);
}

}  // namespace dgpflow

#endif  // DGPFLOW_LINALG_HPP_
