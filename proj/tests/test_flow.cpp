// Copyright 2026 The dgpflow Authors
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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dgpflow/flow.hpp"
#include "dgpflow/rng.hpp"
#include "dgpflow/tape.hpp"

namespace dg = dgpflow;
using Catch::Approx;

namespace {

// Random flow whose steps are identity plus a small perturbation, so every
// W stays comfortably invertible.
dg::FlowStack random_flow(std::size_t k, std::size_t steps, bool activation,
                          dg::SeededRng& rng) {
  dg::FlowStack f = dg::make_flow(k, steps, activation);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        f.steps[s].weight(i, j) += 0.3 * rng.normal();
    f.log_slopes[s] = 0.4 * rng.normal();
  }
  return f;
}

dg::StackedTensor random_stacked(std::size_t m, std::size_t k,
                                 dg::SeededRng& rng) {
  dg::StackedTensor s;
  s.values = rng.normal_matrix(m, k);
  s.spans.push_back(dg::LayerSpan{0, k});
  return s;
}

double max_abs_diff(const dg::Matrix& a, const dg::Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

// Finite-difference log|det| of the full MK x MK Jacobian of flow_forward,
// treating the map as R^(MK) -> R^(MK) row-major.
double fd_jacobian_logdet(const dg::FlowStack& flow, const dg::StackedTensor& v,
                          double h) {
  const std::size_t m = v.values.rows();
  const std::size_t k = v.values.cols();
  const std::size_t dim = m * k;
  dg::Matrix jac(dim, dim);
  for (std::size_t c = 0; c < dim; ++c) {
    dg::StackedTensor vp = v;
    dg::StackedTensor vm = v;
    vp.values.data()[c] += h;
    vm.values.data()[c] -= h;
    dg::Matrix up = dg::flow_forward(flow, vp).out.values;
    dg::Matrix um = dg::flow_forward(flow, vm).out.values;
    for (std::size_t r = 0; r < dim; ++r)
      jac(r, c) = (up.data()[r] - um.data()[r]) / (2.0 * h);
  }
  return dg::lu_logdet(jac).log_abs;
}

}  // namespace

TEST_CASE("stack concatenates layer blocks and records spans") {
  dg::Matrix a(2, 1);
  a(0, 0) = 1;
  a(1, 0) = 2;
  dg::Matrix b(2, 1);
  b(0, 0) = 3;
  b(1, 0) = 4;
  dg::StackedTensor s = dg::stack<double>({a, b});
  REQUIRE(s.values.rows() == 2);
  REQUIRE(s.values.cols() == 2);
  REQUIRE(s.values(0, 0) == 1);
  REQUIRE(s.values(0, 1) == 3);
  REQUIRE(s.values(1, 0) == 2);
  REQUIRE(s.values(1, 1) == 4);
  REQUIRE(s.spans.size() == 2);
  REQUIRE(s.spans[0].offset == 0);
  REQUIRE(s.spans[0].width == 1);
  REQUIRE(s.spans[1].offset == 1);
  REQUIRE(s.spans[1].width == 1);
}

TEST_CASE("single-layer stack is the identity") {
  dg::SeededRng rng(1);
  dg::Matrix a = rng.normal_matrix(3, 2);
  dg::StackedTensor s = dg::stack<double>({a});
  REQUIRE(max_abs_diff(s.values, a) == 0.0);
}

TEST_CASE("unstack inverts stack elementwise") {
  dg::SeededRng rng(2);
  std::vector<dg::Matrix> blocks = {rng.normal_matrix(4, 2),
                                    rng.normal_matrix(4, 1),
                                    rng.normal_matrix(4, 3)};
  std::vector<dg::Matrix> back = dg::unstack(dg::stack(blocks));
  REQUIRE(back.size() == 3);
  for (std::size_t l = 0; l < 3; ++l)
    REQUIRE(max_abs_diff(back[l], blocks[l]) == 0.0);
}

TEST_CASE("stack rejects mismatched row counts") {
  dg::Matrix a(2, 1);
  dg::Matrix b(3, 1);
  REQUIRE_THROWS_AS(dg::stack<double>({a, b}), dg::ShapeMismatch);
}

TEST_CASE("zero flow steps are rejected") {
  REQUIRE_THROWS_AS(dg::make_flow(2, 0, false), dg::ConfigError);
}

TEST_CASE("identity flow maps V to V with zero logdet") {
  dg::SeededRng rng(3);
  dg::StackedTensor v = random_stacked(4, 3, rng);
  dg::FlowStack f = dg::make_flow(3, 1, false);
  dg::FlowResult<double> r = dg::flow_forward(f, v);
  REQUIRE(max_abs_diff(r.out.values, v.values) == 0.0);
  REQUIRE(r.logdet == 0.0);
}

TEST_CASE("diagonal mixing scales rows and sums log determinants") {
  // W = diag(2, 3), M = 5: logdet = 5 ln 6.
  dg::SeededRng rng(4);
  dg::StackedTensor v = random_stacked(5, 2, rng);
  dg::FlowStack f = dg::make_flow(2, 1, false);
  f.steps[0].weight(0, 0) = 2.0;
  f.steps[0].weight(1, 1) = 3.0;
  dg::FlowResult<double> r = dg::flow_forward(f, v);
  REQUIRE(r.logdet == Approx(8.958797346140274).epsilon(1e-14));
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(r.out.values(i, 0) == Approx(2.0 * v.values(i, 0)));
    REQUIRE(r.out.values(i, 1) == Approx(3.0 * v.values(i, 1)));
  }
}

TEST_CASE("shear mixing: hand-computed row with unit determinant") {
  // W = [[1, 1], [0, 1]], row (1, 2) -> (3, 2); logdet = 0.
  dg::StackedTensor v;
  v.values = dg::Matrix(1, 2);
  v.values(0, 0) = 1.0;
  v.values(0, 1) = 2.0;
  v.spans.push_back(dg::LayerSpan{0, 2});
  dg::FlowStack f = dg::make_flow(2, 1, false);
  f.steps[0].weight(0, 1) = 1.0;
  dg::FlowResult<double> r = dg::flow_forward(f, v);
  REQUIRE(r.out.values(0, 0) == Approx(3.0));
  REQUIRE(r.out.values(0, 1) == Approx(2.0));
  REQUIRE(r.logdet == Approx(0.0).margin(1e-14));
}

TEST_CASE("analytic logdet equals the finite-difference Jacobian") {
  dg::SeededRng rng(5);
  for (int t = 0; t < 8; ++t) {
    const std::size_t m = 1 + rng.uniform_index(4);  // M <= 4
    const std::size_t k = 1 + rng.uniform_index(3);  // K <= 3
    dg::FlowStack f = random_flow(k, 1, false, rng);
    dg::StackedTensor v = random_stacked(m, k, rng);
    dg::FlowResult<double> r = dg::flow_forward(f, v);
    const double fd = fd_jacobian_logdet(f, v, 1e-5);
    REQUIRE(r.logdet == Approx(fd).margin(1e-5));
  }
}

TEST_CASE("logdet with activation counts negative entries") {
  dg::FlowStack f = dg::make_flow(1, 1, true);
  f.log_slopes[0] = std::log(0.5);
  dg::StackedTensor v;
  v.values = dg::Matrix(3, 1);
  v.values(0, 0) = 1.0;   // positive: untouched
  v.values(1, 0) = -2.0;  // negative: scaled by 0.5
  v.values(2, 0) = -4.0;  // negative: scaled by 0.5
  v.spans.push_back(dg::LayerSpan{0, 1});
  dg::FlowResult<double> r = dg::flow_forward(f, v);
  REQUIRE(r.out.values(0, 0) == Approx(1.0));
  REQUIRE(r.out.values(1, 0) == Approx(-1.0));
  REQUIRE(r.out.values(2, 0) == Approx(-2.0));
  // logdet = M log|det I| + 2 log(0.5)
  REQUIRE(r.logdet == Approx(2.0 * std::log(0.5)).epsilon(1e-14));
}

TEST_CASE("flow_inverse undoes diagonal scaling") {
  dg::SeededRng rng(6);
  dg::StackedTensor u = random_stacked(4, 2, rng);
  dg::FlowStack f = dg::make_flow(2, 1, false);
  f.steps[0].weight(0, 0) = 2.0;
  f.steps[0].weight(1, 1) = 3.0;
  dg::StackedTensor v = dg::flow_inverse(f, u);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(v.values(i, 0) == Approx(u.values(i, 0) / 2.0));
    REQUIRE(v.values(i, 1) == Approx(u.values(i, 1) / 3.0));
  }
}

TEST_CASE("round trips stay under 1e-8 for 1-3 steps, activation on/off") {
  dg::SeededRng rng(7);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng.uniform_index(5);
    const std::size_t k = 1 + rng.uniform_index(3);
    const std::size_t steps = 1 + rng.uniform_index(3);
    const bool act = rng.uniform() < 0.5;
    dg::FlowStack f = random_flow(k, steps, act, rng);
    dg::StackedTensor v = random_stacked(m, k, rng);
    dg::StackedTensor back =
        dg::flow_inverse(f, dg::flow_forward(f, v).out);
    REQUIRE(max_abs_diff(back.values, v.values) < 1e-8);
    // And the other direction: forward(inverse(u)) = u.
    dg::StackedTensor u = random_stacked(m, k, rng);
    dg::Matrix again = dg::flow_forward(f, dg::flow_inverse(f, u)).out.values;
    REQUIRE(max_abs_diff(again, u.values) < 1e-8);
  }
}

TEST_CASE("singular mixing weights raise Singular") {
  dg::SeededRng rng(8);
  dg::StackedTensor v = random_stacked(2, 2, rng);
  dg::FlowStack f = dg::make_flow(2, 1, false);
  f.steps[0].weight(0, 0) = 1.0;
  f.steps[0].weight(0, 1) = 1.0;
  f.steps[0].weight(1, 0) = 1.0;
  f.steps[0].weight(1, 1) = 1.0;
  REQUIRE_THROWS_AS(dg::flow_forward(f, v), dg::Singular);
  REQUIRE_THROWS_AS(dg::flow_inverse(f, v), dg::Singular);
}

TEST_CASE("zero-initialized base gives mu 0 and sigma ln 2") {
  dg::SeededRng rng(9);
  dg::ConditionalBase base = dg::make_base({1, 1}, {1, 1}, rng);
  // The head (w2, b2) starts at zero, so the moments are input-independent:
  // mu = 0 and sigma = softplus(0) = ln 2 at every inducing input.
  std::vector<dg::Matrix> z = {rng.normal_matrix(3, 1),
                               rng.normal_matrix(3, 1)};
  std::vector<dg::BaseMomentsT<double>> bm = dg::base_params(base, z);
  REQUIRE(bm.size() == 2);
  for (const auto& layer : bm)
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(layer.mu(i, 0) == 0.0);
      REQUIRE(layer.sigma(i, 0) == Approx(0.6931471805599453).epsilon(1e-15));
    }
}

TEST_CASE("base hidden layer applies the 0.2 leaky slope") {
  // One hidden unit effectively: w1 row 0 = 1, head reads unit 0. Preact -1
  // must contribute -0.2 through the hidden activation.
  dg::PhiNet net;
  net.w1 = dg::Matrix(dg::kPhiHiddenUnits, 1);
  net.w1(0, 0) = 1.0;
  net.b1.assign(dg::kPhiHiddenUnits, 0.0);
  net.w2 = dg::Matrix(2, dg::kPhiHiddenUnits);
  net.w2(0, 0) = 1.0;  // mu head reads hidden unit 0
  net.b2.assign(2, 0.0);
  dg::ConditionalBase base;
  base.nets.push_back(net);
  base.widths = {1};
  dg::Matrix z(2, 1);
  z(0, 0) = -1.0;
  z(1, 0) = 2.0;
  std::vector<dg::BaseMomentsT<double>> bm =
      dg::base_params(base, {z});
  REQUIRE(bm[0].mu(0, 0) == Approx(-0.2));
  REQUIRE(bm[0].mu(1, 0) == Approx(2.0));
}

TEST_CASE("permuting inducing rows permutes base moments identically") {
  dg::SeededRng rng(10);
  dg::ConditionalBase base = dg::make_base({2}, {1}, rng);
  // Give the head some random structure so moments vary across rows.
  for (std::size_t i = 0; i < base.nets[0].w2.size(); ++i)
    base.nets[0].w2.storage()[i] = 0.05 * rng.normal();
  dg::Matrix z = rng.normal_matrix(4, 2);
  dg::Matrix zp(4, 2);
  const std::size_t perm[4] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t d = 0; d < 2; ++d) zp(i, d) = z(perm[i], d);
  auto bm = dg::base_params(base, {z});
  auto bmp = dg::base_params(base, {zp});
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(bmp[0].mu(i, 0) == bm[0].mu(perm[i], 0));
    REQUIRE(bmp[0].sigma(i, 0) == bm[0].sigma(perm[i], 0));
  }
}

TEST_CASE("base_sample collapses to mu when sigma is driven to zero") {
  dg::BaseMomentsT<double> bm;
  bm.mu = dg::Matrix(3, 1, 1.7);
  bm.sigma = dg::Matrix(3, 1, 1e-14);
  dg::SeededRng rng(11);
  dg::BaseSampleT<double> s = dg::base_sample<double>({bm}, rng);
  for (std::size_t i = 0; i < 3; ++i)
    REQUIRE(s.v.values(i, 0) == Approx(1.7).margin(1e-12));
}

TEST_CASE("base_sample is reproducible and consistent with base_logpdf") {
  dg::SeededRng rng(12);
  dg::BaseMomentsT<double> bm;
  bm.mu = rng.normal_matrix(4, 2);
  bm.sigma = dg::Matrix(4, 2);
  for (std::size_t i = 0; i < bm.sigma.size(); ++i)
    bm.sigma.storage()[i] = std::exp(0.3 * rng.normal());
  dg::SeededRng s1(13), s2(13);
  dg::BaseSampleT<double> a = dg::base_sample<double>({bm}, s1);
  dg::BaseSampleT<double> b = dg::base_sample<double>({bm}, s2);
  REQUIRE(a.logpi == b.logpi);
  REQUIRE(max_abs_diff(a.v.values, b.v.values) == 0.0);
  // The reparameterized logpi equals the direct density of the drawn point.
  REQUIRE(a.logpi == Approx(dg::base_logpdf<double>({bm}, a.v)).epsilon(1e-12));
}

TEST_CASE("base_sample moments match (mu, sigma) over many draws") {
  dg::BaseMomentsT<double> bm;
  bm.mu = dg::Matrix(1, 1, 0.4);
  bm.sigma = dg::Matrix(1, 1, 1.3);
  dg::SeededRng rng(14);
  const int n = 10000;
  double sum = 0, sumsq = 0;
  for (int t = 0; t < n; ++t) {
    double v = dg::base_sample<double>({bm}, rng).v.values(0, 0);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  REQUIRE(std::fabs(mean - 0.4) < 3.0 * 1.3 / std::sqrt(1.0 * n));
  REQUIRE(std::fabs(sd - 1.3) < 3.0 * 1.3 * std::sqrt(0.5 / n));
}

TEST_CASE("posterior_logq with identity flow equals the base density") {
  dg::SeededRng rng(15);
  dg::BaseMomentsT<double> bm;
  bm.mu = rng.normal_matrix(3, 2);
  bm.sigma = dg::Matrix(3, 2, 0.8);
  dg::FlowStack f = dg::make_flow(2, 1, false);
  dg::SeededRng sampler(16);
  dg::BaseSampleT<double> s = dg::base_sample<double>({bm}, sampler);
  // Identity flow: U = V, so logq(U) = logpi(V).
  double logq = dg::posterior_logq(f, {bm}, s.v);
  REQUIRE(logq == Approx(s.logpi).epsilon(1e-12));
}

TEST_CASE("posterior_logq scalar change-of-variable oracle") {
  // W = 2, M=K=1, standard-normal base, U = 0:
  // logq = log N(0; 0, 1) - ln 2.
  dg::BaseMomentsT<double> bm;
  bm.mu = dg::Matrix(1, 1, 0.0);
  bm.sigma = dg::Matrix(1, 1, 1.0);
  dg::FlowStack f = dg::make_flow(1, 1, false);
  f.steps[0].weight(0, 0) = 2.0;
  dg::StackedTensor u;
  u.values = dg::Matrix(1, 1, 0.0);
  u.spans.push_back(dg::LayerSpan{0, 1});
  REQUIRE(dg::posterior_logq(f, {bm}, u) ==
          Approx(-1.612085713764618).epsilon(1e-14));
}

TEST_CASE("q(u) integrates to one on a 1-D grid") {
  // M=1, K=1, W=2, base N(0.3, 0.7^2): quadrature of exp(logq) over a wide
  // grid around the pushforward N(0.6, 1.4^2).
  dg::BaseMomentsT<double> bm;
  bm.mu = dg::Matrix(1, 1, 0.3);
  bm.sigma = dg::Matrix(1, 1, 0.7);
  dg::FlowStack f = dg::make_flow(1, 1, false);
  f.steps[0].weight(0, 0) = 2.0;
  const double lo = 0.6 - 10.0 * 1.4, hi = 0.6 + 10.0 * 1.4;
  const int steps = 4001;
  const double h = (hi - lo) / (steps - 1);
  double integral = 0.0;
  for (int i = 0; i < steps; ++i) {
    dg::StackedTensor u;
    u.values = dg::Matrix(1, 1, lo + i * h);
    u.spans.push_back(dg::LayerSpan{0, 1});
    const double w = (i == 0 || i == steps - 1) ? 0.5 : 1.0;
    integral += w * std::exp(dg::posterior_logq(f, {bm}, u)) * h;
  }
  REQUIRE(integral == Approx(1.0).margin(1e-3));
}

TEST_CASE("sampled flow outputs match the analytic density histogram") {
  // K=1 flow with W=2 over base N(0.3, 0.7^2): u ~ N(0.6, 1.4^2). Bin 1e4
  // draws into 20 equiprobable cells; chi-square must stay under the 0.99
  // quantile for 19 degrees of freedom.
  const double bounds[19] = {
      -1.6448536269514729, -1.2815515655446004, -1.0364333894937898,
      -0.8416212335729142, -0.6744897501960817, -0.5244005127080407,
      -0.3853204664075676, -0.2533471031357997, -0.12566134685507402,
      0.0,                 0.12566134685507402, 0.2533471031357997,
      0.3853204664075676,  0.5244005127080407,  0.6744897501960817,
      0.8416212335729142,  1.0364333894937898,  1.2815515655446004,
      1.6448536269514729};
  dg::BaseMomentsT<double> bm;
  bm.mu = dg::Matrix(1, 1, 0.3);
  bm.sigma = dg::Matrix(1, 1, 0.7);
  dg::FlowStack f = dg::make_flow(1, 1, false);
  f.steps[0].weight(0, 0) = 2.0;
  dg::SeededRng rng(17);
  const int n = 10000;
  int counts[20] = {0};
  for (int t = 0; t < n; ++t) {
    dg::BaseSampleT<double> s = dg::base_sample<double>({bm}, rng);
    const double u = dg::flow_forward(f, s.v).out.values(0, 0);
    // Density of u is finite at the draw.
    dg::StackedTensor ut;
    ut.values = dg::Matrix(1, 1, u);
    ut.spans.push_back(dg::LayerSpan{0, 1});
    REQUIRE(std::isfinite(dg::posterior_logq(f, {bm}, ut)));
    const double zstat = (u - 0.6) / 1.4;
    int bin = 0;
    while (bin < 19 && zstat > bounds[bin]) ++bin;
    ++counts[bin];
  }
  double chi2 = 0.0;
  for (int b = 0; b < 20; ++b) {
    const double d = counts[b] - n / 20.0;
    chi2 += d * d / (n / 20.0);
  }
  REQUIRE(chi2 < 36.19086912927004);
}

TEST_CASE("flow logdet differentiates w.r.t. weights and slopes") {
  // Objective: logdet of a 2x2 mixing step plus activation at a fixed V.
  // Compare tape gradients against central differences.
  dg::SeededRng rng(18);
  dg::Matrix vvals = rng.normal_matrix(3, 2);
  std::vector<double> theta = {1.1, 0.2, -0.3, 0.9, 0.15};  // W entries + log slope

  auto eval = [&](const std::vector<double>& t) {
    dg::FlowStack f = dg::make_flow(2, 1, true);
    f.steps[0].weight(0, 0) = t[0];
    f.steps[0].weight(0, 1) = t[1];
    f.steps[0].weight(1, 0) = t[2];
    f.steps[0].weight(1, 1) = t[3];
    f.log_slopes[0] = t[4];
    dg::StackedTensor v;
    v.values = vvals;
    v.spans.push_back(dg::LayerSpan{0, 2});
    return dg::flow_forward(f, v).logdet;
  };

  dg::GradientTape tape;
  std::vector<dg::Var> leaves;
  for (double t : theta) leaves.push_back(tape.leaf(t));
  dg::FlowStackT<dg::Var> f;
  f.use_activation = true;
  dg::Mat<dg::Var> w(2, 2, tape.constant(0.0));
  w(0, 0) = leaves[0];
  w(0, 1) = leaves[1];
  w(1, 0) = leaves[2];
  w(1, 1) = leaves[3];
  f.steps.push_back(dg::FlowKernelT<dg::Var>{w});
  f.log_slopes.push_back(leaves[4]);
  dg::StackedTensorT<dg::Var> v;
  v.values = dg::Mat<dg::Var>(3, 2, tape.constant(0.0));
  for (std::size_t i = 0; i < vvals.size(); ++i)
    v.values.storage()[i] = tape.constant(vvals.data()[i]);
  v.spans.push_back(dg::LayerSpan{0, 2});
  dg::Var logdet = dg::flow_forward(f, v).logdet;
  std::vector<double> grad = tape.gradient(logdet);

  const double h = 1e-6;
  // Guard: the negative-entry count must be locally constant, or central
  // differences would straddle an activation kink. Every mixed entry has to
  // sit well clear of zero relative to the probe step.
  {
    dg::FlowStack fd = dg::make_flow(2, 1, true);
    fd.steps[0].weight(0, 0) = theta[0];
    fd.steps[0].weight(0, 1) = theta[1];
    fd.steps[0].weight(1, 0) = theta[2];
    fd.steps[0].weight(1, 1) = theta[3];
    fd.log_slopes[0] = theta[4];
    dg::StackedTensor vd;
    vd.values = vvals;
    vd.spans.push_back(dg::LayerSpan{0, 2});
    dg::Matrix out = dg::flow_forward(fd, vd).out.values;
    for (std::size_t i = 0; i < out.size(); ++i)
      REQUIRE(std::fabs(out.data()[i]) > 100.0 * h);
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (eval(tp) - eval(tm)) / (2.0 * h);
    REQUIRE(grad[leaves[i].idx] == Approx(fd).margin(1e-6));
  }
}
