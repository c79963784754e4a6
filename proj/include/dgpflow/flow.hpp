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

#ifndef DGPFLOW_FLOW_HPP_
#define DGPFLOW_FLOW_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "dgpflow/linalg.hpp"
#include "dgpflow/matrix.hpp"
#include "dgpflow/rng.hpp"
#include "dgpflow/tape.hpp"

namespace dgpflow {

struct LayerSpan {
  std::size_t offset = 0;
  std::size_t width = 0;
};

// All layers' inducing outputs side by side: row m is inducing point m, the
// K columns are the concatenated layer output channels. spans records which
// column block belongs to which layer and partitions [0, K).
template <class T>
struct StackedTensorT {
  Mat<T> values;                 // M x K
  std::vector<LayerSpan> spans;  // one per layer
};

using StackedTensor = StackedTensorT<double>;

template <class T>
StackedTensorT<T> stack(const std::vector<Mat<T>>& per_layer) {
  check_shape(!per_layer.empty(), "stack: need at least one layer");
  const std::size_t m = per_layer[0].rows();
  std::size_t k = 0;
  for (const auto& u : per_layer) {
    check_shape(u.rows() == m, "stack: inducing counts differ");
    check_shape(u.cols() > 0, "stack: empty layer block");
    k += u.cols();
  }
  StackedTensorT<T> s{Mat<T>(m, k), {}};
  std::size_t off = 0;
  for (const auto& u : per_layer) {
    s.spans.push_back(LayerSpan{off, u.cols()});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < u.cols(); ++j)
        s.values(i, off + j) = u(i, j);
    off += u.cols();
  }
  return s;
}

template <class T>
std::vector<Mat<T>> unstack(const StackedTensorT<T>& s) {
  std::vector<Mat<T>> out;
  out.reserve(s.spans.size());
  for (const LayerSpan& span : s.spans) {
    Mat<T> u(s.values.rows(), span.width);
    for (std::size_t i = 0; i < s.values.rows(); ++i)
      for (std::size_t j = 0; j < span.width; ++j)
        u(i, j) = s.values(i, span.offset + j);
    out.push_back(std::move(u));
  }
  return out;
}

// One mixing step: every row of the stacked tensor is multiplied by the
// same K x K weight. Invertibility is enforced at every use through the
// pivoted-LU log-determinant.
template <class T>
struct FlowKernelT {
  Mat<T> weight;  // K x K
};

using FlowKernel = FlowKernelT<double>;

// Composition of mixing steps, each optionally followed by an elementwise
// leaky-linear map with a learned positive slope on the negative half.
template <class T>
struct FlowStackT {
  std::vector<FlowKernelT<T>> steps;
  bool use_activation = false;
  std::vector<T> log_slopes;  // one per step, read when use_activation
};

using FlowStack = FlowStackT<double>;

// Identity initialization: W = I, slopes = 1, so the flow starts as a
// no-op and the base distribution shows through unchanged.
inline FlowStack make_flow(std::size_t k, std::size_t steps,
                           bool use_activation) {
  if (steps == 0) throw ConfigError("flow: needs at least one step");
  FlowStack f;
  f.use_activation = use_activation;
  for (std::size_t s = 0; s < steps; ++s) {
    f.steps.push_back(FlowKernelT<double>{eye(k)});
    f.log_slopes.push_back(0.0);
  }
  return f;
}

template <class T>
struct FlowResult {
  StackedTensorT<T> out;
  T logdet;
};

// Push V through the flow. Each mixing step contributes M log|det W|; each
// activation contributes log(slope) per negative pre-activation entry. The
// count of negative entries is data-dependent but piecewise constant, so
// treating it as a constant in the gradient is exact away from kinks.
template <class T>
FlowResult<T> flow_forward(const FlowStackT<T>& flow,
                           const StackedTensorT<T>& v) {
  check_shape(!flow.steps.empty(), "flow_forward: empty flow");
  const std::size_t m = v.values.rows();
  const std::size_t k = v.values.cols();
  StackedTensorT<T> cur = v;
  bool have_logdet = false;
  T logdet{};
  for (std::size_t s = 0; s < flow.steps.size(); ++s) {
    const Mat<T>& w = flow.steps[s].weight;
    check_shape(w.rows() == k && w.cols() == k, "flow_forward: weight shape");
    LogDet<T> ld = lu_logdet(w);  // throws Singular on det 0
    T step_logdet = static_cast<double>(m) * ld.log_abs;

    Mat<T> mixed(m, k);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t r = 0; r < k; ++r) {
        T acc = w(r, 0) * cur.values(i, 0);
        for (std::size_t c = 1; c < k; ++c)
          acc = acc + w(r, c) * cur.values(i, c);
        mixed(i, r) = acc;
      }
    }
    if (flow.use_activation) {
      const T& log_slope = flow.log_slopes[s];
      const T slope = exp(log_slope);
      std::size_t negatives = 0;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
          if (value_of(mixed(i, c)) < 0.0) {
            mixed(i, c) = mixed(i, c) * slope;
            ++negatives;
          }
        }
      }
      if (negatives > 0)
        step_logdet =
            step_logdet + static_cast<double>(negatives) * log_slope;
    }
    cur.values = std::move(mixed);
    logdet = have_logdet ? logdet + step_logdet : step_logdet;
    have_logdet = true;
  }
  return FlowResult<T>{std::move(cur), logdet};
}

// Exact inverse of flow_forward: activations are undone by dividing the
// negative entries by the slope (the map is sign-preserving), mixing steps
// by a pivoted-LU solve per row.
template <class T>
StackedTensorT<T> flow_inverse(const FlowStackT<T>& flow,
                               const StackedTensorT<T>& u) {
  check_shape(!flow.steps.empty(), "flow_inverse: empty flow");
  const std::size_t k = u.values.cols();
  StackedTensorT<T> cur = u;
  for (std::size_t s = flow.steps.size(); s-- > 0;) {
    if (flow.use_activation) {
      const T slope = exp(flow.log_slopes[s]);
      for (std::size_t i = 0; i < cur.values.rows(); ++i)
        for (std::size_t c = 0; c < k; ++c)
          if (value_of(cur.values(i, c)) < 0.0)
            cur.values(i, c) = cur.values(i, c) / slope;
    }
    const Mat<T>& w = flow.steps[s].weight;
    check_shape(w.rows() == k && w.cols() == k, "flow_inverse: weight shape");
    LuFactors<T> f = lu_factor(w);
    cur.values = transpose(lu_solve(f, transpose(cur.values)));
  }
  return cur;
}

// Two-layer conditioner phi: inducing input -> (mu, pre-softplus sigma) for
// every output channel of its layer. Hidden activation is leaky ReLU with
// fixed slope 0.2.
template <class T>
struct PhiNetT {
  Mat<T> w1;          // hidden x d_in
  std::vector<T> b1;  // hidden
  Mat<T> w2;          // 2*width x hidden
  std::vector<T> b2;  // 2*width
};

using PhiNet = PhiNetT<double>;

inline constexpr double kPhiLeakySlope = 0.2;
inline constexpr std::size_t kPhiHiddenUnits = 256;

// Inducing-input-conditioned diagonal Gaussian over V, one conditioner per
// layer. widths mirror the stacked tensor's layer spans.
template <class T>
struct ConditionalBaseT {
  std::vector<PhiNetT<T>> nets;
  std::vector<std::size_t> widths;
};

using ConditionalBase = ConditionalBaseT<double>;

// Hidden weights h/sqrt(fan_in), zero biases; output layer all zero so the
// base starts at N(0, softplus(0)^2) everywhere.
inline ConditionalBase make_base(const std::vector<std::size_t>& input_dims,
                                 const std::vector<std::size_t>& widths,
                                 SeededRng& rng,
                                 std::size_t hidden = kPhiHiddenUnits) {
  check_shape(input_dims.size() == widths.size() && !widths.empty(),
              "make_base: layer counts");
  ConditionalBase base;
  base.widths = widths;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    PhiNet net;
    net.w1 = rng.normal_matrix(hidden, input_dims[l]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_dims[l]));
    for (std::size_t i = 0; i < net.w1.size(); ++i)
      net.w1.storage()[i] *= scale;
    net.b1.assign(hidden, 0.0);
    net.w2 = Matrix(2 * widths[l], hidden, 0.0);
    net.b2.assign(2 * widths[l], 0.0);
    base.nets.push_back(std::move(net));
  }
  return base;
}

// Per-layer base moments at the inducing inputs.
template <class T>
struct BaseMomentsT {
  Mat<T> mu;     // M x width
  Mat<T> sigma;  // M x width, strictly positive (softplus of the raw head)
};

template <class T>
std::vector<BaseMomentsT<T>> base_params(const ConditionalBaseT<T>& base,
                                         const std::vector<Mat<T>>& inducing) {
  check_shape(inducing.size() == base.nets.size(), "base_params: layer count");
  std::vector<BaseMomentsT<T>> out;
  out.reserve(base.nets.size());
  for (std::size_t l = 0; l < base.nets.size(); ++l) {
    const PhiNetT<T>& net = base.nets[l];
    const Mat<T>& z = inducing[l];
    const std::size_t m = z.rows();
    const std::size_t width = base.widths[l];
    const std::size_t hidden = net.w1.rows();
    check_shape(net.w1.cols() == z.cols(), "base_params: input width");
    check_shape(net.w2.rows() == 2 * width && net.w2.cols() == hidden,
                "base_params: head shape");
    BaseMomentsT<T> bm{Mat<T>(m, width), Mat<T>(m, width)};
    std::vector<T> h(hidden, net.b1.empty() ? T{} : net.b1[0]);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t r = 0; r < hidden; ++r) {
        T acc = net.b1[r] + net.w1(r, 0) * z(i, 0);
        for (std::size_t c = 1; c < z.cols(); ++c)
          acc = acc + net.w1(r, c) * z(i, c);
        h[r] = leaky_relu(acc, kPhiLeakySlope);
      }
      for (std::size_t o = 0; o < 2 * width; ++o) {
        T acc = net.b2[o] + net.w2(o, 0) * h[0];
        for (std::size_t c = 1; c < hidden; ++c)
          acc = acc + net.w2(o, c) * h[c];
        if (o < width)
          bm.mu(i, o) = acc;
        else
          bm.sigma(i, o - width) = softplus(acc);
      }
    }
    out.push_back(std::move(bm));
  }
  return out;
}

template <class T>
struct BaseSampleT {
  StackedTensorT<T> v;
  T logpi;  // log density of v under the base, in reparameterized form
};

// Draw V = mu + sigma * eps with eps consumed layer-major, row-major within
// a layer. logpi is assembled from eps directly: the mean's contribution to
// the density of its own sample cancels identically, and writing it that
// way keeps the cancellation exact.
template <class T>
BaseSampleT<T> base_sample(const std::vector<BaseMomentsT<T>>& moments,
                           SeededRng& rng) {
  check_shape(!moments.empty(), "base_sample: no layers");
  std::vector<Mat<T>> blocks;
  double eps_quad = 0.0;
  std::size_t count = 0;
  bool have = false;
  T sum_log_sigma{};
  for (const BaseMomentsT<T>& bm : moments) {
    Mat<T> v(bm.mu.rows(), bm.mu.cols());
    for (std::size_t i = 0; i < bm.mu.rows(); ++i) {
      for (std::size_t j = 0; j < bm.mu.cols(); ++j) {
        const double eps = rng.normal();
        v(i, j) = bm.mu(i, j) + bm.sigma(i, j) * eps;
        eps_quad += eps * eps;
        T ls = log(bm.sigma(i, j));
        sum_log_sigma = have ? sum_log_sigma + ls : ls;
        have = true;
        ++count;
      }
    }
    blocks.push_back(std::move(v));
  }
  T logpi = -0.5 * (static_cast<double>(count) * kLog2Pi + eps_quad) -
            sum_log_sigma;
  return BaseSampleT<T>{stack(blocks), logpi};
}

// log pi(v) for an externally supplied stacked tensor.
template <class T>
T base_logpdf(const std::vector<BaseMomentsT<T>>& moments,
              const StackedTensorT<T>& v) {
  check_shape(v.spans.size() == moments.size(), "base_logpdf: layer count");
  bool have = false;
  T acc{};
  for (std::size_t l = 0; l < moments.size(); ++l) {
    const BaseMomentsT<T>& bm = moments[l];
    const LayerSpan& span = v.spans[l];
    check_shape(bm.mu.rows() == v.values.rows() && bm.mu.cols() == span.width,
                "base_logpdf: block shape");
    for (std::size_t i = 0; i < bm.mu.rows(); ++i) {
      for (std::size_t j = 0; j < span.width; ++j) {
        T sd = bm.sigma(i, j);
        T r = (v.values(i, span.offset + j) - bm.mu(i, j)) / sd;
        T term = -0.5 * (kLog2Pi + r * r) - log(sd);
        acc = have ? acc + term : term;
        have = true;
      }
    }
  }
  return acc;
}

// log q(U) for U in the flow's image: density of the preimage under the
// base minus the forward log-determinant, both evaluated at V.
template <class T>
T posterior_logq(const FlowStackT<T>& flow,
                 const std::vector<BaseMomentsT<T>>& moments,
                 const StackedTensorT<T>& u) {
  StackedTensorT<T> v = flow_inverse(flow, u);
  FlowResult<T> fwd = flow_forward(flow, v);
  return base_logpdf(moments, v) - fwd.logdet;
}

}  // namespace dgpflow

#endif  // DGPFLOW_FLOW_HPP_
