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

#ifndef DGPFLOW_GRADCHECK_HPP_
#define DGPFLOW_GRADCHECK_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dgpflow/tape.hpp"

namespace dgpflow {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Compares reverse-mode gradients against central differences. The
// objective receives the tape and one Var per parameter, in order, and must
// be a pure function of those values so perturbed re-evaluations see the
// same branches and random draws. Relative error uses |numeric| + 1e-8 in
// the denominator.
template <class Objective>
GradCheckResult grad_check(Objective&& objective,
                           const std::vector<double>& params, double step) {
  const std::size_t p = params.size();

  const auto eval = [&](GradientTape& tape, const std::vector<double>& at,
                        std::vector<Var>* leaves_out) {
    std::vector<Var> leaves;
    leaves.reserve(p);
    for (double v : at) leaves.push_back(tape.leaf(v));
    Var root = objective(tape, leaves);
    if (!std::isfinite(tape.value(root)))
      throw NonFinite("grad_check: objective not finite");
    if (leaves_out) *leaves_out = leaves;
    return root;
  };

  GradientTape tape;
  std::vector<Var> leaves;
  Var root = eval(tape, params, &leaves);
  std::vector<double> adj = tape.gradient(root);

  GradCheckResult r;
  r.analytic.resize(p);
  r.numeric.resize(p);
  for (std::size_t i = 0; i < p; ++i) r.analytic[i] = adj[leaves[i].idx];

  GradientTape scratch;
  std::vector<double> at = params;
  for (std::size_t i = 0; i < p; ++i) {
    at[i] = params[i] + step;
    scratch.clear();
    const double fp = scratch.value(eval(scratch, at, nullptr));
    at[i] = params[i] - step;
    scratch.clear();
    const double fm = scratch.value(eval(scratch, at, nullptr));
    at[i] = params[i];
    r.numeric[i] = (fp - fm) / (2.0 * step);
    const double rel = std::fabs(r.analytic[i] - r.numeric[i]) /
                       (std::fabs(r.numeric[i]) + 1e-8);
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
      r.analytic_at_worst = r.analytic[i];
      r.numeric_at_worst = r.numeric[i];
    }
  }
  return r;
}

}  // namespace dgpflow

#endif  // DGPFLOW_GRADCHECK_HPP_
