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

#ifndef DGPFLOW_TAPE_HPP_
#define DGPFLOW_TAPE_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "dgpflow/errors.hpp"

namespace dgpflow {

class GradientTape;

// Handle into a GradientTape. Cheap to copy; all arithmetic on Var records
// nodes on the owning tape. Mixing Vars from two live tapes is a bug.
struct Var {
  GradientTape* tape = nullptr;
  std::int32_t idx = -1;
  inline double val() const;
};

// Reverse-mode tape over scalars. Each node keeps at most two parents with
// constant local partials, which covers every primitive the library needs.
// The graph is rebuilt from scratch each objective evaluation; clear() keeps
// the node storage to avoid churn.
class GradientTape {
 public:
  struct Node {
    double val;
    std::int32_t p0, p1;
    double w0, w1;
  };

  // Differentiable input. Leaves and constants share representation; the
  // split is semantic (constants are never read back for gradients).
  Var leaf(double v) { return push(v, -1, -1, 0.0, 0.0); }
  Var constant(double v) { return push(v, -1, -1, 0.0, 0.0); }

  Var push(double val, std::int32_t p0, std::int32_t p1, double w0,
           double w1) {
    nodes_.push_back(Node{val, p0, p1, w0, w1});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  double value(Var x) const { return nodes_[x.idx].val; }
  std::size_t node_count() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // Adjoints of every node with respect to root, one reverse sweep. The
  // gradient of a node the root does not depend on is exactly zero.
  std::vector<double> gradient(Var root) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[root.idx] = 1.0;
    for (std::int32_t i = static_cast<std::int32_t>(nodes_.size()) - 1;
         i >= 0; --i) {
      const Node& n = nodes_[i];
      const double a = adj[i];
      if (a == 0.0) continue;
      if (n.p0 >= 0) adj[n.p0] += n.w0 * a;
      if (n.p1 >= 0) adj[n.p1] += n.w1 * a;
    }
    return adj;
  }

 private:
  std::vector<Node> nodes_;
};

inline double Var::val() const { return tape->value(*this); }

inline double value_of(double x) { return x; }
inline double value_of(Var x) { return x.val(); }

inline double zero_like(double) { return 0.0; }
inline Var zero_like(Var x) { return x.tape->constant(0.0); }

// ---- arithmetic ----------------------------------------------------------

inline Var operator+(Var a, Var b) {
  return a.tape->push(a.val() + b.val(), a.idx, b.idx, 1.0, 1.0);
}
inline Var operator+(Var a, double c) {
  return a.tape->push(a.val() + c, a.idx, -1, 1.0, 0.0);
}
inline Var operator+(double c, Var a) { return a + c; }

inline Var operator-(Var a, Var b) {
  return a.tape->push(a.val() - b.val(), a.idx, b.idx, 1.0, -1.0);
}
inline Var operator-(Var a, double c) {
  return a.tape->push(a.val() - c, a.idx, -1, 1.0, 0.0);
}
inline Var operator-(double c, Var a) {
  return a.tape->push(c - a.val(), a.idx, -1, -1.0, 0.0);
}
inline Var operator-(Var a) {
  return a.tape->push(-a.val(), a.idx, -1, -1.0, 0.0);
}

inline Var operator*(Var a, Var b) {
  return a.tape->push(a.val() * b.val(), a.idx, b.idx, b.val(), a.val());
}
inline Var operator*(Var a, double c) {
  return a.tape->push(a.val() * c, a.idx, -1, c, 0.0);
}
inline Var operator*(double c, Var a) { return a * c; }

inline Var operator/(Var a, Var b) {
  const double bv = b.val();
  return a.tape->push(a.val() / bv, a.idx, b.idx, 1.0 / bv,
                      -a.val() / (bv * bv));
}
inline Var operator/(Var a, double c) { return a * (1.0 / c); }
inline Var operator/(double c, Var a) {
  const double av = a.val();
  return a.tape->push(c / av, a.idx, -1, -c / (av * av), 0.0);
}

// ---- elementary functions ------------------------------------------------
// double overloads let templated numeric code call these unqualified for
// either scalar type.

inline double exp(double x) { return std::exp(x); }
inline Var exp(Var a) {
  const double v = std::exp(a.val());
  return a.tape->push(v, a.idx, -1, v, 0.0);
}

inline double log(double x) { return std::log(x); }
inline Var log(Var a) {
  return a.tape->push(std::log(a.val()), a.idx, -1, 1.0 / a.val(), 0.0);
}

inline double sqrt(double x) { return std::sqrt(x); }
inline Var sqrt(Var a) {
  const double v = std::sqrt(a.val());
  return a.tape->push(v, a.idx, -1, 0.5 / v, 0.0);
}

// log|x|; derivative 1/x on both branches.
inline double logabs(double x) { return std::log(std::fabs(x)); }
inline Var logabs(Var a) {
  return a.tape->push(std::log(std::fabs(a.val())), a.idx, -1, 1.0 / a.val(),
                      0.0);
}

// Numerically stable log(1 + e^x); derivative is the sigmoid.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline Var softplus(Var a) {
  const double x = a.val();
  const double w =
      x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return a.tape->push(softplus(x), a.idx, -1, w, 0.0);
}

inline double leaky_relu(double x, double slope) {
  return x >= 0.0 ? x : slope * x;
}
inline Var leaky_relu(Var a, double slope) {
  const double x = a.val();
  return a.tape->push(leaky_relu(x, slope), a.idx, -1, x >= 0.0 ? 1.0 : slope,
                      0.0);
}

// max(x, 0) as a clamp; subgradient 0 at the kink.
inline double max0(double x) { return x > 0.0 ? x : 0.0; }
inline Var max0(Var a) {
  const double x = a.val();
  return a.tape->push(max0(x), a.idx, -1, x > 0.0 ? 1.0 : 0.0, 0.0);
}

}  // namespace dgpflow

#endif  // DGPFLOW_TAPE_HPP_
