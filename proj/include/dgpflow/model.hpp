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

#ifndef DGPFLOW_MODEL_HPP_
#define DGPFLOW_MODEL_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgpflow/flow.hpp"
#include "dgpflow/gp.hpp"
#include "dgpflow/kernels.hpp"
#include "dgpflow/linalg.hpp"
#include "dgpflow/matrix.hpp"
#include "dgpflow/rng.hpp"
#include "dgpflow/tape.hpp"

namespace dgpflow {

enum class PosteriorKind { kFlow, kMeanField };

inline const char* posterior_name(PosteriorKind k) {
  return k == PosteriorKind::kFlow ? "cnf" : "meanfield";
}

inline PosteriorKind posterior_from_name(const std::string& s) {
  if (s == "cnf") return PosteriorKind::kFlow;
  if (s == "meanfield") return PosteriorKind::kMeanField;
  throw ConfigError("unknown posterior '" + s + "' (want cnf or meanfield)");
}

// Gaussian baseline posterior: per layer a mean and, for every output
// column, a packed lower-triangular Cholesky factor whose diagonal is kept
// in the log domain. logdet of the covariance is then exact and the factor
// is positive definite by construction.
template <class T>
struct MeanFieldT {
  std::vector<Mat<T>> mean;         // per layer, M x width
  std::vector<Mat<T>> chol_packed;  // per layer, M(M+1)/2 x width
};

using MeanField = MeanFieldT<double>;

inline std::size_t packed_index(std::size_t i, std::size_t j) {
  return i * (i + 1) / 2 + j;  // j <= i
}

// Deep GP with a shared likelihood noise on the last layer. Inducing
// outputs are parameterized as deviations from the layers' linear mean
// terms, so their prior is N(0, K_ZZ) per output column.
template <class T>
struct DgpModelT {
  std::vector<SparseLayerT<T>> layers;
  PosteriorKind posterior = PosteriorKind::kFlow;
  FlowStackT<T> flow;        // posterior == kFlow
  ConditionalBaseT<T> base;  // posterior == kFlow
  MeanFieldT<T> meanfield;   // posterior == kMeanField
  T log_noise{};
  double jitter = 1e-8;
};

using DgpModel = DgpModelT<double>;

struct TrainConfig {
  std::vector<std::size_t> widths;  // layer output dims; last must be 1
  std::size_t num_inducing = 16;
  PosteriorKind posterior = PosteriorKind::kFlow;
  std::size_t flow_steps = 1;
  bool flow_activation = false;
  std::size_t iterations = 1000;
  double learning_rate = 0.005;  // 0 freezes parameters; the trace still runs
  std::size_t minibatch = 0;  // 0 means full batch
  std::size_t mc_samples = 1;
  std::uint64_t seed = 0;
  double jitter = 1e-8;
};

inline void validate(const TrainConfig& c, std::size_t n_train,
                     std::size_t input_dim) {
  if (c.widths.empty()) throw ConfigError("config: no layer widths");
  if (c.widths.back() != 1)
    throw ConfigError("config: last layer width must be 1");
  for (std::size_t w : c.widths)
    if (w == 0) throw ConfigError("config: zero layer width");
  if (input_dim == 0) throw ConfigError("config: zero input dimension");
  if (c.num_inducing == 0) throw ConfigError("config: need inducing points");
  if (c.num_inducing > n_train)
    throw ConfigError("config: more inducing points (" +
                      std::to_string(c.num_inducing) + ") than training rows (" +
                      std::to_string(n_train) + ")");
  if (c.flow_steps == 0) throw ConfigError("config: need flow steps");
  if (c.iterations == 0) throw ConfigError("config: need iterations");
  if (!(c.learning_rate >= 0.0)) throw ConfigError("config: learning rate");
  if (c.minibatch > n_train)
    throw ConfigError("config: minibatch larger than training set");
  if (c.mc_samples == 0) throw ConfigError("config: need mc samples");
  if (!(c.jitter >= 0.0)) throw ConfigError("config: negative jitter");
}

namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kPredict = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kIteration = 0x100;  // + iteration number
}  // namespace streams

// Fresh model at the standard initialization: inducing inputs are a random
// subset of the training inputs pushed through the mean projections, kernels
// at defaults, flow at identity, conditioner heads at zero, mean-field at
// N(0, (ln 2)^2 I) to match the flow posterior's initial marginals.
inline DgpModel make_dgp_model(const Matrix& x_train, const TrainConfig& c) {
  validate(c, x_train.rows(), x_train.cols());
  SeededRng rng = SeededRng(c.seed).split(streams::kInit);

  // Distinct random rows, partial Fisher-Yates.
  std::vector<std::size_t> idx(x_train.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < c.num_inducing; ++i) {
    const std::size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }

  DgpModel m;
  m.posterior = c.posterior;
  m.jitter = c.jitter;
  m.log_noise = std::log(0.01);

  std::vector<std::size_t> input_dims;
  Matrix cur = x_train;
  for (std::size_t l = 0; l < c.widths.size(); ++l) {
    input_dims.push_back(cur.cols());
    Matrix z(c.num_inducing, cur.cols());
    for (std::size_t i = 0; i < c.num_inducing; ++i)
      for (std::size_t d = 0; d < cur.cols(); ++d) z(i, d) = cur(idx[i], d);
    SparseLayer layer = make_layer(std::move(z),
                                   default_kernel_params(cur.cols()),
                                   c.widths[l]);
    cur = matmul(cur, layer.mean_projection);
    m.layers.push_back(std::move(layer));
  }

  if (c.posterior == PosteriorKind::kFlow) {
    std::size_t k = 0;
    for (std::size_t w : c.widths) k += w;
    m.flow = make_flow(k, c.flow_steps, c.flow_activation);
    m.base = make_base(input_dims, c.widths, rng);
  } else {
    const double log_ln2 = std::log(std::log(2.0));
    for (std::size_t l = 0; l < c.widths.size(); ++l) {
      m.meanfield.mean.emplace_back(c.num_inducing, c.widths[l], 0.0);
      Matrix packed(c.num_inducing * (c.num_inducing + 1) / 2, c.widths[l],
                    0.0);
      for (std::size_t i = 0; i < c.num_inducing; ++i)
        for (std::size_t j = 0; j < c.widths[l]; ++j)
          packed(packed_index(i, i), j) = log_ln2;
      m.meanfield.chol_packed.push_back(std::move(packed));
    }
  }
  return m;
}

// ---- parameter traversal ---------------------------------------------

// Visits every trainable block as (name, contiguous data, count), in a
// fixed order shared by the flattener, the optimizer, the gradient readout
// and the checkpoint writer.
template <class T, class F>
void visit_trainable(DgpModelT<T>& m, F&& f) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l);
    SparseLayerT<T>& layer = m.layers[l];
    f(p + ".inducing", layer.inducing.data(), layer.inducing.size());
    f(p + ".log_lengthscales", layer.kernel.log_lengthscales.data(),
      layer.kernel.log_lengthscales.size());
    f(p + ".log_variance", &layer.kernel.log_variance, 1);
  }
  if (m.posterior == PosteriorKind::kFlow) {
    for (std::size_t s = 0; s < m.flow.steps.size(); ++s) {
      const std::string p = "flow.step" + std::to_string(s);
      f(p + ".weight", m.flow.steps[s].weight.data(),
        m.flow.steps[s].weight.size());
      if (m.flow.use_activation) f(p + ".log_slope", &m.flow.log_slopes[s], 1);
    }
    for (std::size_t l = 0; l < m.base.nets.size(); ++l) {
      const std::string p = "base.net" + std::to_string(l);
      PhiNetT<T>& net = m.base.nets[l];
      f(p + ".w1", net.w1.data(), net.w1.size());
      f(p + ".b1", net.b1.data(), net.b1.size());
      f(p + ".w2", net.w2.data(), net.w2.size());
      f(p + ".b2", net.b2.data(), net.b2.size());
    }
  } else {
    for (std::size_t l = 0; l < m.meanfield.mean.size(); ++l) {
      const std::string p = "mf.layer" + std::to_string(l);
      f(p + ".mean", m.meanfield.mean[l].data(), m.meanfield.mean[l].size());
      f(p + ".chol", m.meanfield.chol_packed[l].data(),
        m.meanfield.chol_packed[l].size());
    }
  }
  f("log_noise", &m.log_noise, 1);
}

struct ParamBlock {
  std::string name;
  std::size_t offset;
  std::size_t count;
};

template <class T>
std::vector<ParamBlock> param_blocks(const DgpModelT<T>& m) {
  std::vector<ParamBlock> blocks;
  std::size_t off = 0;
  visit_trainable(const_cast<DgpModelT<T>&>(m),
                  [&](const std::string& name, const T*, std::size_t count) {
                    blocks.push_back(ParamBlock{name, off, count});
                    off += count;
                  });
  return blocks;
}

inline std::vector<double> flatten_params(const DgpModel& m) {
  std::vector<double> out;
  visit_trainable(const_cast<DgpModel&>(m),
                  [&](const std::string&, const double* d, std::size_t n) {
                    out.insert(out.end(), d, d + n);
                  });
  return out;
}

inline void set_params(DgpModel& m, const std::vector<double>& flat) {
  std::size_t off = 0;
  visit_trainable(m, [&](const std::string&, double* d, std::size_t n) {
    check_shape(off + n <= flat.size(), "set_params: flat size");
    std::copy(flat.begin() + off, flat.begin() + off + n, d);
    off += n;
  });
  check_shape(off == flat.size(), "set_params: flat size");
}

// ---- lifting onto a tape ----------------------------------------------

inline Mat<Var> lift(GradientTape& tape, const Matrix& m, bool leaf) {
  Mat<Var> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i)
    out.storage()[i] = leaf ? tape.leaf(m.storage()[i])
                            : tape.constant(m.storage()[i]);
  return out;
}

inline std::vector<Var> lift(GradientTape& tape, const std::vector<double>& v,
                             bool leaf) {
  std::vector<Var> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(leaf ? tape.leaf(x) : tape.constant(x));
  return out;
}

// Differentiable copy of the model: every trainable scalar becomes a tape
// leaf; fixed structure (mean projections, jitter) is carried as data.
inline DgpModelT<Var> lift_model(GradientTape& tape, const DgpModel& m) {
  DgpModelT<Var> out;
  out.posterior = m.posterior;
  out.jitter = m.jitter;
  for (const SparseLayer& layer : m.layers) {
    SparseLayerT<Var> lv;
    lv.inducing = lift(tape, layer.inducing, true);
    lv.kernel.log_lengthscales =
        lift(tape, layer.kernel.log_lengthscales, true);
    lv.kernel.log_variance = tape.leaf(layer.kernel.log_variance);
    lv.kernel.log_noise = tape.constant(layer.kernel.log_noise);
    lv.width = layer.width;
    lv.mean_projection = layer.mean_projection;
    out.layers.push_back(std::move(lv));
  }
  if (m.posterior == PosteriorKind::kFlow) {
    out.flow.use_activation = m.flow.use_activation;
    for (const auto& step : m.flow.steps)
      out.flow.steps.push_back(FlowKernelT<Var>{lift(tape, step.weight, true)});
    for (double s : m.flow.log_slopes)
      out.flow.log_slopes.push_back(m.flow.use_activation ? tape.leaf(s)
                                                          : tape.constant(s));
    out.base.widths = m.base.widths;
    for (const PhiNet& net : m.base.nets) {
      PhiNetT<Var> nv;
      nv.w1 = lift(tape, net.w1, true);
      nv.b1 = lift(tape, net.b1, true);
      nv.w2 = lift(tape, net.w2, true);
      nv.b2 = lift(tape, net.b2, true);
      out.base.nets.push_back(std::move(nv));
    }
  } else {
    for (std::size_t l = 0; l < m.meanfield.mean.size(); ++l) {
      out.meanfield.mean.push_back(lift(tape, m.meanfield.mean[l], true));
      out.meanfield.chol_packed.push_back(
          lift(tape, m.meanfield.chol_packed[l], true));
    }
  }
  out.log_noise = tape.leaf(m.log_noise);
  return out;
}

// Swap the lifted model's leaves for caller-supplied ones (same visit
// order). Valid only before any arithmetic has consumed the old handles.
inline void replace_leaves(DgpModelT<Var>& m, const std::vector<Var>& leaves) {
  std::size_t off = 0;
  visit_trainable(m, [&](const std::string&, Var* d, std::size_t n) {
    check_shape(off + n <= leaves.size(), "replace_leaves: leaf count");
    std::copy(leaves.begin() + off, leaves.begin() + off + n, d);
    off += n;
  });
  check_shape(off == leaves.size(), "replace_leaves: leaf count");
}

// ---- posterior sampling ------------------------------------------------

template <class T>
struct PosteriorSampleT {
  std::vector<Mat<T>> u;  // per layer, M x width
  T logq;                 // flow posterior only; unset for mean-field
  bool has_logq = false;
};

template <class T>
std::vector<Mat<T>> layer_cholesky(const DgpModelT<T>& m) {
  std::vector<Mat<T>> chols;
  chols.reserve(m.layers.size());
  for (const SparseLayerT<T>& layer : m.layers)
    chols.push_back(
        cholesky(kernel_matrix_sym(layer.inducing, layer.kernel), m.jitter));
  return chols;
}

template <class T>
std::vector<Mat<T>> inducing_inputs(const DgpModelT<T>& m) {
  std::vector<Mat<T>> z;
  z.reserve(m.layers.size());
  for (const SparseLayerT<T>& layer : m.layers) z.push_back(layer.inducing);
  return z;
}

// One draw from the flow posterior given precomputed base moments.
template <class T>
PosteriorSampleT<T> sample_flow_posterior(const DgpModelT<T>& m,
                                          const std::vector<BaseMomentsT<T>>& moments,
                                          SeededRng& rng) {
  BaseSampleT<T> bs = base_sample(moments, rng);
  FlowResult<T> fwd = flow_forward(m.flow, bs.v);
  PosteriorSampleT<T> out;
  out.u = unstack(fwd.out);
  out.logq = bs.logpi - fwd.logdet;
  out.has_logq = true;
  return out;
}

// Mean-field draw: per layer, per output column, u_j = mean_j + L_j eps.
// eps order: layer-major, column-major, row within column.
template <class T>
PosteriorSampleT<T> sample_meanfield_posterior(const DgpModelT<T>& m,
                                               SeededRng& rng) {
  PosteriorSampleT<T> out;
  for (std::size_t l = 0; l < m.meanfield.mean.size(); ++l) {
    const Mat<T>& mean = m.meanfield.mean[l];
    const Mat<T>& packed = m.meanfield.chol_packed[l];
    const std::size_t rows = mean.rows();
    Mat<T> u = mean;
    for (std::size_t j = 0; j < mean.cols(); ++j) {
      std::vector<double> eps(rows);
      for (std::size_t i = 0; i < rows; ++i) eps[i] = rng.normal();
      for (std::size_t i = 0; i < rows; ++i) {
        T acc = u(i, j);
        for (std::size_t c = 0; c < i; ++c)
          acc = acc + packed(packed_index(i, c), j) * eps[c];
        acc = acc + exp(packed(packed_index(i, i), j)) * eps[i];
        u(i, j) = acc;
      }
    }
    out.u.push_back(std::move(u));
  }
  return out;
}

// Public single-draw entry point; recomputes the base moments.
template <class T>
PosteriorSampleT<T> sample_posterior_U(const DgpModelT<T>& m, SeededRng& rng) {
  if (m.posterior == PosteriorKind::kFlow)
    return sample_flow_posterior(m, base_params(m.base, inducing_inputs(m)),
                                 rng);
  return sample_meanfield_posterior(m, rng);
}

// Monte-Carlo sweep through the layers: each layer's outputs are drawn from
// its conditional given the previous layer's draw.
template <class T>
Mat<T> propagate_with_chols(const DgpModelT<T>& m,
                            const std::vector<Mat<T>>& chols, const Mat<T>& x,
                            const std::vector<Mat<T>>& u, SeededRng& rng) {
  check_shape(u.size() == m.layers.size(), "propagate: layer count");
  Mat<T> cur = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l)
    cur = sample_layer_with_chol(m.layers[l], chols[l], cur, u[l], rng);
  return cur;
}

template <class T>
Mat<T> propagate(const DgpModelT<T>& m, const Mat<T>& x,
                 const std::vector<Mat<T>>& u, SeededRng& rng) {
  return propagate_with_chols(m, layer_cholesky(m), x, u, rng);
}

// log N(u_col | 0, L L^T) summed over all layers and columns.
template <class T>
T prior_logdensity_u(const std::vector<Mat<T>>& chols,
                     const std::vector<Mat<T>>& u) {
  bool have = false;
  T acc{};
  for (std::size_t l = 0; l < u.size(); ++l) {
    const Mat<T>& chol = chols[l];
    const std::size_t mm = chol.rows();
    Mat<T> alpha = solve_triangular(chol, u[l], Tri::kLower);
    T logdet = log(chol(0, 0));
    for (std::size_t i = 1; i < mm; ++i) logdet = logdet + log(chol(i, i));
    for (std::size_t j = 0; j < u[l].cols(); ++j) {
      T quad = alpha(0, j) * alpha(0, j);
      for (std::size_t i = 1; i < mm; ++i)
        quad = quad + alpha(i, j) * alpha(i, j);
      T term = -0.5 * (quad + static_cast<double>(mm) * kLog2Pi) - logdet;
      acc = have ? acc + term : term;
      have = true;
    }
  }
  return acc;
}

// KL(q || p) for the mean-field posterior, closed form per layer column.
// The factor diagonal is exp(raw), so its log-determinant is the raw sum.
template <class T>
T meanfield_kl(const DgpModelT<T>& m, const std::vector<Mat<T>>& chols) {
  bool have = false;
  T acc{};
  for (std::size_t l = 0; l < m.meanfield.mean.size(); ++l) {
    const Mat<T>& mean = m.meanfield.mean[l];
    const Mat<T>& packed = m.meanfield.chol_packed[l];
    const Mat<T>& lp = chols[l];
    const std::size_t mm = mean.rows();
    T logdet_p = log(lp(0, 0));
    for (std::size_t i = 1; i < mm; ++i) logdet_p = logdet_p + log(lp(i, i));
    for (std::size_t j = 0; j < mean.cols(); ++j) {
      // Expand the packed factor for this column.
      Mat<T> lq(mm, mm, zero_like(packed(0, j)));
      for (std::size_t i = 0; i < mm; ++i) {
        for (std::size_t c = 0; c < i; ++c)
          lq(i, c) = packed(packed_index(i, c), j);
        lq(i, i) = exp(packed(packed_index(i, i), j));
      }
      Mat<T> mcol(mm, 1);
      for (std::size_t i = 0; i < mm; ++i) mcol(i, 0) = mean(i, j);
      Mat<T> c1 = solve_triangular(lp, lq, Tri::kLower);
      Mat<T> b1 = solve_triangular(lp, mcol, Tri::kLower);
      T tr = c1(0, 0) * c1(0, 0);
      for (std::size_t i = 0; i < mm; ++i)
        for (std::size_t c = 0; c <= i; ++c)
          if (i + c > 0) tr = tr + c1(i, c) * c1(i, c);
      T quad = b1(0, 0) * b1(0, 0);
      for (std::size_t i = 1; i < mm; ++i) quad = quad + b1(i, 0) * b1(i, 0);
      T logdet_q = packed(packed_index(0, 0), j);
      for (std::size_t i = 1; i < mm; ++i)
        logdet_q = logdet_q + packed(packed_index(i, i), j);
      T term = 0.5 * (tr + quad - static_cast<double>(mm)) + logdet_p -
               logdet_q;
      acc = have ? acc + term : term;
      have = true;
    }
  }
  return acc;
}

// ---- ELBO ----------------------------------------------------------------

template <class T>
T likelihood_term(const DgpModelT<T>& m, const Mat<T>& f,
                  const std::vector<double>& y) {
  check_shape(f.rows() == y.size() && f.cols() == 1, "likelihood: shape");
  const T noise = exp(m.log_noise);
  T acc = normal_logpdf(y[0], f(0, 0), noise);
  for (std::size_t i = 1; i < y.size(); ++i)
    acc = acc + normal_logpdf(y[i], f(i, 0), noise);
  return acc;
}

// One Monte-Carlo term of the flow-posterior objective:
// scale * log p(y | F) + log p(U) - log q(U).
template <class T>
T elbo_flow_sample(const DgpModelT<T>& m,
                   const std::vector<BaseMomentsT<T>>& moments,
                   const std::vector<Mat<T>>& chols, const Mat<T>& x,
                   const std::vector<double>& y, double scale,
                   SeededRng& rng) {
  PosteriorSampleT<T> s = sample_flow_posterior(m, moments, rng);
  Mat<T> f = propagate_with_chols(m, chols, x, s.u, rng);
  return scale * likelihood_term(m, f, y) + prior_logdensity_u(chols, s.u) -
         s.logq;
}

// Monte-Carlo ELBO estimate; scale = n_total / batch rescales the
// likelihood when x is a minibatch. Dispatches on the posterior kind.
template <class T>
T elbo_estimate(const DgpModelT<T>& m, const Mat<T>& x,
                const std::vector<double>& y, std::size_t n_total,
                std::size_t n_samples, SeededRng& rng) {
  check_shape(x.rows() == y.size() && x.rows() > 0, "elbo: rows");
  check_shape(n_samples > 0, "elbo: samples");
  const double scale =
      static_cast<double>(n_total) / static_cast<double>(y.size());
  std::vector<Mat<T>> chols = layer_cholesky(m);
  if (m.posterior == PosteriorKind::kFlow) {
    std::vector<BaseMomentsT<T>> moments =
        base_params(m.base, inducing_inputs(m));
    T acc = elbo_flow_sample(m, moments, chols, x, y, scale, rng);
    for (std::size_t s = 1; s < n_samples; ++s)
      acc = acc + elbo_flow_sample(m, moments, chols, x, y, scale, rng);
    return acc / static_cast<double>(n_samples);
  }
  T acc = likelihood_term(
      m, propagate_with_chols(m, chols, x,
                              sample_meanfield_posterior(m, rng).u, rng),
      y);
  for (std::size_t s = 1; s < n_samples; ++s)
    acc = acc + likelihood_term(
                    m, propagate_with_chols(
                           m, chols, x,
                           sample_meanfield_posterior(m, rng).u, rng),
                    y);
  return scale * (acc / static_cast<double>(n_samples)) - meanfield_kl(m, chols);
}

// Convenience alias: the objective restricted to the mean-field family.
template <class T>
T elbo_meanfield_dgp(const DgpModelT<T>& m, const Mat<T>& x,
                     const std::vector<double>& y, std::size_t n_total,
                     std::size_t n_samples, SeededRng& rng) {
  check_shape(m.posterior == PosteriorKind::kMeanField,
              "elbo_meanfield_dgp: wrong posterior kind");
  return elbo_estimate(m, x, y, n_total, n_samples, rng);
}

// Per-sample objective terms for diagnostics (mean and standard error of
// the flow ELBO estimator at the current parameters).
struct ElboStats {
  double mean = 0.0;
  double std_error = 0.0;
};

inline ElboStats elbo_mc_stats(const DgpModel& m, const Matrix& x,
                               const std::vector<double>& y,
                               std::size_t n_samples, SeededRng& rng) {
  check_shape(m.posterior == PosteriorKind::kFlow, "elbo_mc_stats: flow only");
  std::vector<Mat<double>> chols = layer_cholesky(m);
  std::vector<BaseMomentsT<double>> moments =
      base_params(m.base, inducing_inputs(m));
  std::vector<double> terms(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s)
    terms[s] = elbo_flow_sample(m, moments, chols, x, y, 1.0, rng);
  ElboStats st;
  for (double t : terms) st.mean += t;
  st.mean /= static_cast<double>(n_samples);
  double ss = 0.0;
  for (double t : terms) ss += (t - st.mean) * (t - st.mean);
  if (n_samples > 1)
    st.std_error = std::sqrt(ss / (static_cast<double>(n_samples) *
                                   static_cast<double>(n_samples - 1)));
  return st;
}

// Unnormalized posterior log-density of inducing outputs: joint likelihood
// of the full data under one conditional draw plus the prior of U.
inline double posterior_logdensity_unnorm(const DgpModel& m, const Matrix& x,
                                          const std::vector<double>& y,
                                          const std::vector<Matrix>& u,
                                          SeededRng& rng) {
  std::vector<Matrix> chols = layer_cholesky(m);
  Matrix f = propagate_with_chols(m, chols, x, u, rng);
  return likelihood_term(m, f, y) + prior_logdensity_u(chols, u);
}

// ---- training --------------------------------------------------------

struct TraceRow {
  std::size_t iteration;  // 1-based
  double elbo;
  double seconds;  // wall time since training started
};

struct TrainTrace {
  std::vector<TraceRow> rows;
};

// Mean of the last `window` ELBO values (all rows if fewer).
inline double smoothed_elbo(const TrainTrace& trace, std::size_t window) {
  if (trace.rows.empty()) throw Error("smoothed_elbo: empty trace");
  const std::size_t n = std::min(window, trace.rows.size());
  double acc = 0.0;
  for (std::size_t i = trace.rows.size() - n; i < trace.rows.size(); ++i)
    acc += trace.rows[i].elbo;
  return acc / static_cast<double>(n);
}

// Adam ascent on the Monte-Carlo ELBO. The graph is rebuilt every
// iteration; iteration i draws from the (seed, iteration) substream so runs
// are bit-reproducible for a fixed config. Throws NonFinite, tagged with
// the iteration, if the objective or any gradient degenerates.
inline TrainTrace train(DgpModel& model, const Matrix& x,
                        const std::vector<double>& y, const TrainConfig& c) {
  check_shape(x.rows() == y.size() && x.rows() > 0, "train: rows");
  const std::size_t n = x.rows();
  const std::size_t batch =
      (c.minibatch == 0 || c.minibatch >= n) ? n : c.minibatch;

  std::vector<double> params = flatten_params(model);
  std::vector<double> adam_m(params.size(), 0.0);
  std::vector<double> adam_v(params.size(), 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  TrainTrace trace;
  trace.rows.reserve(c.iterations);
  GradientTape tape;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t it = 1; it <= c.iterations; ++it) {
    SeededRng rng = SeededRng(c.seed).split(streams::kIteration + it);

    Matrix xb;
    std::vector<double> yb;
    if (batch == n) {
      xb = x;
      yb = y;
    } else {
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      xb = Matrix(batch, x.cols());
      yb.resize(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(idx[i], idx[j]);
        for (std::size_t d = 0; d < x.cols(); ++d) xb(i, d) = x(idx[i], d);
        yb[i] = y[idx[i]];
      }
    }

    tape.clear();
    DgpModelT<Var> mv = lift_model(tape, model);
    Mat<Var> xv = lift(tape, xb, false);
    Var objective = elbo_estimate(mv, xv, yb, n, c.mc_samples, rng);
    const double value = tape.value(objective);
    if (!std::isfinite(value))
      throw NonFinite("train: objective not finite", static_cast<long>(it));

    std::vector<double> adj = tape.gradient(objective);
    std::vector<double> grad(params.size());
    std::size_t off = 0;
    visit_trainable(mv, [&](const std::string& name, Var* d, std::size_t nn) {
      for (std::size_t i = 0; i < nn; ++i) {
        const double g = adj[d[i].idx];
        if (!std::isfinite(g))
          throw NonFinite("train: gradient not finite in " + name,
                          static_cast<long>(it));
        grad[off + i] = g;
      }
      off += nn;
    });

    const double t = static_cast<double>(it);
    const double corr1 = 1.0 - std::pow(beta1, t);
    const double corr2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * grad[i];
      adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] += c.learning_rate * (adam_m[i] / corr1) /
                   (std::sqrt(adam_v[i] / corr2) + adam_eps);
    }
    set_params(model, params);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    trace.rows.push_back(TraceRow{it, value, seconds});
  }
  return trace;
}

// ---- prediction --------------------------------------------------------

struct PredictResult {
  double mean_mll = 0.0;
  std::vector<double> per_point;
};

// Held-out predictive log-likelihood under the equal-weight Gaussian
// mixture over posterior samples: per point, log of the average of
// N(y | f_s, sigma_n^2) across draws, computed by log-sum-exp. y_std
// converts from the standardized target scale back to the original units
// (subtracts log y_std).
inline PredictResult predict_mll(const DgpModel& m, const Matrix& x,
                                 const std::vector<double>& y,
                                 std::size_t n_samples, SeededRng& rng,
                                 double y_std = 1.0) {
  check_shape(x.rows() == y.size() && x.rows() > 0, "predict_mll: rows");
  check_shape(n_samples > 0, "predict_mll: samples");
  const std::size_t n = x.rows();
  std::vector<Matrix> chols = layer_cholesky(m);
  const double noise = std::exp(m.log_noise);

  Matrix comp(n, n_samples);
  if (m.posterior == PosteriorKind::kFlow) {
    std::vector<BaseMomentsT<double>> moments =
        base_params(m.base, inducing_inputs(m));
    for (std::size_t s = 0; s < n_samples; ++s) {
      PosteriorSampleT<double> ps = sample_flow_posterior(m, moments, rng);
      Matrix f = propagate_with_chols(m, chols, x, ps.u, rng);
      for (std::size_t i = 0; i < n; ++i)
        comp(i, s) = normal_logpdf(y[i], f(i, 0), noise);
    }
  } else {
    for (std::size_t s = 0; s < n_samples; ++s) {
      PosteriorSampleT<double> ps = sample_meanfield_posterior(m, rng);
      Matrix f = propagate_with_chols(m, chols, x, ps.u, rng);
      for (std::size_t i = 0; i < n; ++i)
        comp(i, s) = normal_logpdf(y[i], f(i, 0), noise);
    }
  }

  PredictResult out;
  out.per_point.resize(n);
  const double log_s = std::log(static_cast<double>(n_samples));
  for (std::size_t i = 0; i < n; ++i) {
    double hi = comp(i, 0);
    for (std::size_t s = 1; s < n_samples; ++s) hi = std::max(hi, comp(i, s));
    double acc = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) acc += std::exp(comp(i, s) - hi);
    out.per_point[i] = hi + std::log(acc) - log_s - std::log(y_std);
    out.mean_mll += out.per_point[i];
  }
  out.mean_mll /= static_cast<double>(n);
  return out;
}

}  // namespace dgpflow

#endif  // DGPFLOW_MODEL_HPP_
