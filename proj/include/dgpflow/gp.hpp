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

#ifndef DGPFLOW_GP_HPP_
#define DGPFLOW_GP_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "dgpflow/kernels.hpp"
#include "dgpflow/linalg.hpp"
#include "dgpflow/matrix.hpp"
#include "dgpflow/rng.hpp"
#include "dgpflow/tape.hpp"

namespace dgpflow {

// One sparse GP layer: M inducing inputs in the layer's input space, a
// kernel shared across the layer's output dimensions, and a fixed linear
// mean term X A that carries the skip connection through depth.
template <class T>
struct SparseLayerT {
  Mat<T> inducing;           // Z, M x d_in
  KernelParamsT<T> kernel;   // over d_in
  std::size_t width = 1;     // d_out
  Matrix mean_projection;    // d_in x d_out, not trained
};

using SparseLayer = SparseLayerT<double>;

// Identity-truncation projection: copies the first min(d_in, d_out) inputs.
inline Matrix default_projection(std::size_t d_in, std::size_t d_out) {
  Matrix a(d_in, d_out, 0.0);
  for (std::size_t i = 0; i < d_in && i < d_out; ++i) a(i, i) = 1.0;
  return a;
}

template <class T>
SparseLayerT<T> make_layer(Mat<T> inducing, KernelParamsT<T> kernel,
                           std::size_t width) {
  SparseLayerT<T> l;
  l.mean_projection = default_projection(inducing.cols(), width);
  l.inducing = std::move(inducing);
  l.kernel = std::move(kernel);
  l.width = width;
  return l;
}

// Conditional moments of the layer outputs at X given inducing outputs U.
// variance holds the per-point conditional variance replicated across
// columns (the kernel is shared, so all outputs have the same variance).
template <class T>
struct LayerConditionalT {
  Mat<T> mean;      // N x d_out
  Mat<T> variance;  // N x d_out, >= 0 (negative round-off clamped to zero)
};

template <class T>
using LayerConditional = LayerConditionalT<T>;

// Moments with a caller-supplied Cholesky factor of K_ZZ + jitter*I, so one
// factorization serves the conditional and the prior density of U.
template <class T>
LayerConditionalT<T> conditional_with_chol(const SparseLayerT<T>& layer,
                                           const Mat<T>& l_zz,
                                           const Mat<T>& x, const Mat<T>& u) {
  const std::size_t n = x.rows();
  const std::size_t m = layer.inducing.rows();
  check_shape(u.rows() == m && u.cols() == layer.width,
              "conditional: inducing output shape");
  check_shape(x.cols() == layer.inducing.cols(), "conditional: input width");

  Mat<T> k_zx = kernel_matrix(layer.inducing, x, layer.kernel);
  Mat<T> a = solve_triangular(l_zz, k_zx, Tri::kLower);  // L^-1 K_ZX
  Mat<T> b = solve_triangular(l_zz, u, Tri::kLower);     // L^-1 U

  LayerConditionalT<T> out{Mat<T>(n, layer.width), Mat<T>(n, layer.width)};
  std::vector<T> diag = kernel_diag(x, layer.kernel);
  for (std::size_t i = 0; i < n; ++i) {
    // mean: (X A)_ij + sum_m a(m, i) b(m, j)
    for (std::size_t j = 0; j < layer.width; ++j) {
      T s = a(0, i) * b(0, j);
      for (std::size_t k = 1; k < m; ++k) s = s + a(k, i) * b(k, j);
      for (std::size_t d = 0; d < x.cols(); ++d) {
        const double w = layer.mean_projection(d, j);
        if (w != 0.0) s = s + x(i, d) * w;
      }
      out.mean(i, j) = s;
    }
    T nystrom = a(0, i) * a(0, i);
    for (std::size_t k = 1; k < m; ++k) nystrom = nystrom + a(k, i) * a(k, i);
    T v = max0(diag[i] - nystrom);
    for (std::size_t j = 0; j < layer.width; ++j) out.variance(i, j) = v;
  }
  return out;
}

template <class T>
LayerConditionalT<T> conditional(const SparseLayerT<T>& layer, const Mat<T>& x,
                                 const Mat<T>& u, double jitter) {
  Mat<T> k_zz = kernel_matrix_sym(layer.inducing, layer.kernel);
  return conditional_with_chol(layer, cholesky(k_zz, jitter), x, u);
}

// Draw layer outputs with the reparameterization f = mean + sqrt(var) * eps.
// eps is consumed row-major over (point, output), which pins the stream
// layout for reproducibility.
template <class T>
Mat<T> sample_layer_with_chol(const SparseLayerT<T>& layer, const Mat<T>& l_zz,
                              const Mat<T>& x, const Mat<T>& u,
                              SeededRng& rng) {
  LayerConditionalT<T> c = conditional_with_chol(layer, l_zz, x, u);
  Mat<T> f(x.rows(), layer.width);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    T sd = sqrt(c.variance(i, 0));
    for (std::size_t j = 0; j < layer.width; ++j)
      f(i, j) = c.mean(i, j) + sd * rng.normal();
  }
  return f;
}

template <class T>
Mat<T> sample_layer(const SparseLayerT<T>& layer, const Mat<T>& x,
                    const Mat<T>& u, SeededRng& rng, double jitter) {
  Mat<T> k_zz = kernel_matrix_sym(layer.inducing, layer.kernel);
  return sample_layer_with_chol(layer, cholesky(k_zz, jitter), x, u, rng);
}

// log N(y | 0, K_XX + sigma_n^2 I), the exact single-layer evidence.
inline double exact_log_marginal(const Matrix& x, const std::vector<double>& y,
                                 const KernelParams& params) {
  check_shape(x.rows() == y.size() && x.rows() > 0,
              "exact_log_marginal: row count");
  Matrix k = kernel_matrix_sym(x, params);
  const double noise = std::exp(params.log_noise);
  for (std::size_t i = 0; i < k.rows(); ++i) k(i, i) += noise;
  Matrix l = cholesky(k, 0.0);
  Matrix rhs(y.size(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) rhs(i, 0) = y[i];
  Matrix alpha = solve_triangular(l, rhs, Tri::kLower);
  double quad = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    quad += alpha(i, 0) * alpha(i, 0);
    logdet += std::log(l(i, i));
  }
  return -0.5 * quad - logdet -
         0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

// Exact GP posterior at x_star: latent mean and noise-free latent variance.
inline std::pair<std::vector<double>, std::vector<double>> exact_predict(
    const Matrix& x_star, const Matrix& x, const std::vector<double>& y,
    const KernelParams& params) {
  check_shape(x.rows() == y.size() && x.rows() > 0, "exact_predict: rows");
  check_shape(x_star.cols() == x.cols(), "exact_predict: input width");
  Matrix k = kernel_matrix_sym(x, params);
  const double noise = std::exp(params.log_noise);
  for (std::size_t i = 0; i < k.rows(); ++i) k(i, i) += noise;
  Matrix l = cholesky(k, 0.0);
  Matrix k_xs = kernel_matrix(x, x_star, params);  // N x N*
  Matrix v = solve_triangular(l, k_xs, Tri::kLower);
  Matrix rhs(y.size(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) rhs(i, 0) = y[i];
  Matrix alpha =
      solve_triangular(transpose(l), solve_triangular(l, rhs, Tri::kLower),
                       Tri::kUpper);
  std::vector<double> mean(x_star.rows()), variance(x_star.rows());
  const double sig2 = std::exp(params.log_variance);
  for (std::size_t j = 0; j < x_star.rows(); ++j) {
    double mu = 0.0, nys = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      mu += k_xs(i, j) * alpha(i, 0);
      nys += v(i, j) * v(i, j);
    }
    mean[j] = mu;
    variance[j] = sig2 - nys;
  }
  return {std::move(mean), std::move(variance)};
}

// Collapsed-free ELBO of a single-output sparse GP with a full-covariance
// Gaussian over the inducing outputs: E_q[log p(y | f)] - KL(q || p(u)).
// q_chol is the lower Cholesky factor of the q covariance. The layer's
// log_noise supplies the likelihood variance.
template <class T>
T sgp_elbo_meanfield(const Mat<T>& x, const std::vector<double>& y,
                     const SparseLayerT<T>& layer, const Mat<T>& q_mean,
                     const Mat<T>& q_chol, double jitter) {
  const std::size_t n = x.rows();
  const std::size_t m = layer.inducing.rows();
  check_shape(layer.width == 1, "sgp_elbo_meanfield: single output only");
  check_shape(y.size() == n && n > 0, "sgp_elbo_meanfield: row count");
  check_shape(q_mean.rows() == m && q_mean.cols() == 1,
              "sgp_elbo_meanfield: q_mean shape");
  check_shape(q_chol.rows() == m && q_chol.cols() == m,
              "sgp_elbo_meanfield: q_chol shape");
  for (std::size_t i = 0; i < m; ++i) {
    if (!(value_of(q_chol(i, i)) > 0.0))
      throw Error("sgp_elbo_meanfield: q_chol diagonal must be positive");
    for (std::size_t j = i + 1; j < m; ++j)
      if (value_of(q_chol(i, j)) != 0.0)
        throw Error("sgp_elbo_meanfield: q_chol must be lower triangular");
  }

  Mat<T> k_zz = kernel_matrix_sym(layer.inducing, layer.kernel);
  Mat<T> l = cholesky(k_zz, jitter);
  Mat<T> k_zx = kernel_matrix(layer.inducing, x, layer.kernel);
  Mat<T> a = solve_triangular(l, k_zx, Tri::kLower);   // M x N
  Mat<T> b = solve_triangular(l, q_mean, Tri::kLower); // M x 1
  Mat<T> c = solve_triangular(l, q_chol, Tri::kLower); // M x M
  Mat<T> g = matmul(transpose(c), a);                  // M x N

  std::vector<T> diag = kernel_diag(x, layer.kernel);
  const T noise = exp(layer.kernel.log_noise);
  T expected = zero_like(noise);
  for (std::size_t i = 0; i < n; ++i) {
    T mu = a(0, i) * b(0, 0);
    for (std::size_t k = 1; k < m; ++k) mu = mu + a(k, i) * b(k, 0);
    for (std::size_t d = 0; d < x.cols(); ++d) {
      const double w = layer.mean_projection(d, 0);
      if (w != 0.0) mu = mu + x(i, d) * w;
    }
    T nys = a(0, i) * a(0, i);
    T extra = g(0, i) * g(0, i);
    for (std::size_t k = 1; k < m; ++k) {
      nys = nys + a(k, i) * a(k, i);
      extra = extra + g(k, i) * g(k, i);
    }
    T var_f = diag[i] - nys + extra;
    expected = expected + normal_logpdf(y[i], mu, noise) -
               var_f / (2.0 * noise);
  }

  // KL(q || p): 0.5 (tr(K^-1 S) + m^T K^-1 m - M + logdet K - logdet S)
  T tr = c(0, 0) * c(0, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (i + j > 0) tr = tr + c(i, j) * c(i, j);
  T quad = b(0, 0) * b(0, 0);
  for (std::size_t i = 1; i < m; ++i) quad = quad + b(i, 0) * b(i, 0);
  T logdet_p = log(l(0, 0));
  T logdet_q = log(q_chol(0, 0));
  for (std::size_t i = 1; i < m; ++i) {
    logdet_p = logdet_p + log(l(i, i));
    logdet_q = logdet_q + log(q_chol(i, i));
  }
  T kl = 0.5 * (tr + quad - static_cast<double>(m)) + logdet_p - logdet_q;
  return expected - kl;
}

}  // namespace dgpflow

#endif  // DGPFLOW_GP_HPP_
