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

#ifndef DGPFLOW_KERNELS_HPP_
#define DGPFLOW_KERNELS_HPP_

#include <cstddef>
#include <vector>

#include "dgpflow/linalg.hpp"
#include "dgpflow/matrix.hpp"
#include "dgpflow/tape.hpp"

namespace dgpflow {

// Squared-exponential ARD hyperparameters, all kept in the log domain so
// the optimizer is unconstrained. log_noise is the observation noise
// log-variance; it participates only where a likelihood is attached.
template <class T>
struct KernelParamsT {
  std::vector<T> log_lengthscales;  // one per input dimension
  T log_variance;                   // log signal variance
  T log_noise;                      // log noise variance
};

using KernelParams = KernelParamsT<double>;

// Defaults: unit lengthscales and signal variance, noise variance 0.01.
inline KernelParams default_kernel_params(std::size_t input_dim) {
  KernelParams p;
  p.log_lengthscales.assign(input_dim, 0.0);
  p.log_variance = 0.0;
  p.log_noise = std::log(0.01);
  return p;
}

// k(x, x') = sigma_f^2 exp(-0.5 sum_d (x_d - x'_d)^2 / l_d^2). Strictly
// positive, maximal at x = x'.
template <class T>
T se_ard(const Mat<T>& x, std::size_t i, const Mat<T>& z, std::size_t j,
         const std::vector<T>& inv_sq_lengthscales, const T& variance) {
  T diff = x(i, 0) - z(j, 0);
  T q = diff * diff * inv_sq_lengthscales[0];
  for (std::size_t d = 1; d < inv_sq_lengthscales.size(); ++d) {
    diff = x(i, d) - z(j, d);
    q = q + diff * diff * inv_sq_lengthscales[d];
  }
  return variance * exp(-0.5 * q);
}

template <class T>
T se_ard(const std::vector<T>& x, const std::vector<T>& z,
         const KernelParamsT<T>& params) {
  check_shape(x.size() == z.size() && x.size() > 0 &&
                  x.size() == params.log_lengthscales.size(),
              "se_ard: input dimension");
  Mat<T> a(1, x.size()), b(1, z.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    a(0, d) = x[d];
    b(0, d) = z[d];
  }
  std::vector<T> inv(params.log_lengthscales.size(), params.log_variance);
  for (std::size_t d = 0; d < inv.size(); ++d)
    inv[d] = exp(-2.0 * params.log_lengthscales[d]);
  return se_ard(a, 0, b, 0, inv, exp(params.log_variance));
}

// Cross-covariance K(X, Z), one row per row of X.
template <class T>
Mat<T> kernel_matrix(const Mat<T>& x, const Mat<T>& z,
                     const KernelParamsT<T>& params) {
  check_shape(x.cols() == z.cols() && x.cols() > 0 &&
                  x.cols() == params.log_lengthscales.size(),
              "kernel_matrix: input dimension");
  std::vector<T> inv(params.log_lengthscales.size(),
                     params.log_variance);
  for (std::size_t d = 0; d < inv.size(); ++d)
    inv[d] = exp(-2.0 * params.log_lengthscales[d]);
  T variance = exp(params.log_variance);
  Mat<T> k(x.rows(), z.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < z.rows(); ++j)
      k(i, j) = se_ard(x, i, z, j, inv, variance);
  return k;
}

// K(X, X) with each off-diagonal computed once and mirrored, so the result
// is exactly symmetric and the diagonal is exactly the signal variance.
template <class T>
Mat<T> kernel_matrix_sym(const Mat<T>& x, const KernelParamsT<T>& params) {
  check_shape(x.cols() > 0 && x.cols() == params.log_lengthscales.size(),
              "kernel_matrix_sym: input dimension");
  std::vector<T> inv(params.log_lengthscales.size(), params.log_variance);
  for (std::size_t d = 0; d < inv.size(); ++d)
    inv[d] = exp(-2.0 * params.log_lengthscales[d]);
  T variance = exp(params.log_variance);
  Mat<T> k(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    k(i, i) = variance;
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      T v = se_ard(x, i, x, j, inv, variance);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// diag K(X, X); constant sigma_f^2 for this kernel family.
template <class T>
std::vector<T> kernel_diag(const Mat<T>& x, const KernelParamsT<T>& params) {
  check_shape(x.cols() == params.log_lengthscales.size(),
              "kernel_diag: input dimension");
  return std::vector<T>(x.rows(), exp(params.log_variance));
}

}  // namespace dgpflow

#endif  // DGPFLOW_KERNELS_HPP_
