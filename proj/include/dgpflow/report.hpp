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

#ifndef DGPFLOW_REPORT_HPP_
#define DGPFLOW_REPORT_HPP_

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dgpflow/checkpoint.hpp"
#include "dgpflow/model.hpp"

namespace dgpflow {

// %.17g prints the shortest decimal that rounds back to the same double for
// trace and metric files; checkpoints use hexfloat instead.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RunReport {
  TrainConfig config;
  std::string data_path;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double final_elbo = 0.0;
  double smoothed_elbo = 0.0;  // window of 50
  double test_mll = 0.0;
  double train_seconds = 0.0;
};

inline std::string trace_csv(const TrainTrace& trace) {
  std::ostringstream out;
  out << "iter,elbo,seconds\n";
  for (const TraceRow& r : trace.rows)
    out << r.iteration << ',' << format_double(r.elbo) << ','
        << format_double(r.seconds) << "\n";
  return out.str();
}

inline std::string report_text(const RunReport& r) {
  std::ostringstream out;
  out << "data " << r.data_path << "\n";
  out << "posterior " << posterior_name(r.config.posterior) << "\n";
  out << "layers " << r.config.widths.size() << "\n";
  out << "widths";
  for (std::size_t w : r.config.widths) out << ' ' << w;
  out << "\n";
  out << "inducing " << r.config.num_inducing << "\n";
  out << "flow_steps " << r.config.flow_steps << "\n";
  out << "activation " << (r.config.flow_activation ? 1 : 0) << "\n";
  out << "iterations " << r.config.iterations << "\n";
  out << "learning_rate " << format_double(r.config.learning_rate) << "\n";
  out << "minibatch " << r.config.minibatch << "\n";
  out << "mc_samples " << r.config.mc_samples << "\n";
  out << "seed " << r.config.seed << "\n";
  out << "n_train " << r.n_train << "\n";
  out << "n_test " << r.n_test << "\n";
  out << "final_elbo " << format_double(r.final_elbo) << "\n";
  out << "smoothed_elbo " << format_double(r.smoothed_elbo) << "\n";
  out << "test_mll " << format_double(r.test_mll) << "\n";
  out << "train_seconds " << format_double(r.train_seconds) << "\n";
  return out.str();
}

// Per-point held-out log-likelihoods, one row per test point.
inline std::string mll_csv(const std::vector<double>& per_point) {
  std::ostringstream out;
  out << "index,mll\n";
  for (std::size_t i = 0; i < per_point.size(); ++i)
    out << i << ',' << format_double(per_point[i]) << "\n";
  return out.str();
}

struct CompareRow {
  std::size_t depth;
  PosteriorKind posterior;
  double smoothed_elbo;
  double test_mll;
};

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "depth,posterior,elbo,mll\n";
  for (const CompareRow& r : rows)
    out << r.depth << ',' << posterior_name(r.posterior) << ','
        << format_double(r.smoothed_elbo) << ',' << format_double(r.test_mll)
        << "\n";
  return out.str();
}

}  // namespace dgpflow

#endif  // DGPFLOW_REPORT_HPP_
