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

#ifndef DGPFLOW_CHECKPOINT_HPP_
#define DGPFLOW_CHECKPOINT_HPP_

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dgpflow/dataset.hpp"
#include "dgpflow/errors.hpp"
#include "dgpflow/model.hpp"

namespace dgpflow {

namespace detail {

// Hexfloat formatting round-trips every finite double bit-exactly through
// strtod, which is what makes checkpoints reproducible to the last bit.
inline std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& tok, const std::string& ctx) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + tok.size())
    throw CheckpointError("bad value '" + tok + "' in " + ctx);
  return v;
}

inline std::string join_names(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) s.push_back(',');
    s += names[i];
  }
  return s;
}

inline std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

struct LoadedCheckpoint {
  DgpModel model;
  TrainConfig config;
  DataStats stats;
  std::vector<std::string> feature_names;
  std::string target_name;
};

// Self-describing text checkpoint: a header of config and standardization
// stats, then one named block per trainable parameter group with its values
// in hexfloat. Rebuilding the model from the header and filling the blocks
// reproduces the saved model exactly.
inline std::string serialize_checkpoint(const DgpModel& model,
                                        const TrainConfig& config,
                                        const DataStats& stats,
                                        const std::vector<std::string>& features,
                                        const std::string& target) {
  std::ostringstream out;
  out << "dgpflow-checkpoint v1\n";
  out << "posterior " << posterior_name(model.posterior) << "\n";
  out << "input_dim " << stats.x_mean.size() << "\n";
  out << "widths";
  for (std::size_t w : config.widths) out << ' ' << w;
  out << "\n";
  out << "inducing " << config.num_inducing << "\n";
  out << "flow_steps " << config.flow_steps << "\n";
  out << "activation " << (config.flow_activation ? 1 : 0) << "\n";
  out << "iterations " << config.iterations << "\n";
  out << "learning_rate " << detail::hexfloat(config.learning_rate) << "\n";
  out << "minibatch " << config.minibatch << "\n";
  out << "mc_samples " << config.mc_samples << "\n";
  out << "seed " << config.seed << "\n";
  out << "jitter " << detail::hexfloat(config.jitter) << "\n";
  out << "x_mean";
  for (double v : stats.x_mean) out << ' ' << detail::hexfloat(v);
  out << "\n";
  out << "x_std";
  for (double v : stats.x_std) out << ' ' << detail::hexfloat(v);
  out << "\n";
  out << "y_mean " << detail::hexfloat(stats.y_mean) << "\n";
  out << "y_std " << detail::hexfloat(stats.y_std) << "\n";
  out << "features " << detail::join_names(features) << "\n";
  out << "target " << target << "\n";

  visit_trainable(
      const_cast<DgpModel&>(model),
      [&](const std::string& name, const double* data, std::size_t count) {
        out << "block " << name << ' ' << count << "\n";
        for (std::size_t i = 0; i < count; ++i) {
          out << detail::hexfloat(data[i]);
          out << ((i + 1) % 8 == 0 || i + 1 == count ? '\n' : ' ');
        }
      });
  out << "end\n";
  return out.str();
}

inline void save_checkpoint(const std::string& path, const DgpModel& model,
                            const TrainConfig& config, const DataStats& stats,
                            const std::vector<std::string>& features,
                            const std::string& target);

// Structural rebuild at the checkpoint's shapes; parameter values are
// placeholders until the blocks are read.
inline DgpModel rebuild_model(const TrainConfig& config,
                              std::size_t input_dim) {
  DgpModel m;
  m.posterior = config.posterior;
  m.jitter = config.jitter;
  m.log_noise = std::log(0.01);
  std::vector<std::size_t> input_dims;
  std::size_t d_in = input_dim;
  for (std::size_t w : config.widths) {
    input_dims.push_back(d_in);
    m.layers.push_back(make_layer(Matrix(config.num_inducing, d_in, 0.0),
                                  default_kernel_params(d_in), w));
    d_in = w;
  }
  if (config.posterior == PosteriorKind::kFlow) {
    std::size_t k = 0;
    for (std::size_t w : config.widths) k += w;
    m.flow = make_flow(k, config.flow_steps, config.flow_activation);
    SeededRng dummy(0);
    m.base = make_base(input_dims, config.widths, dummy);
  } else {
    for (std::size_t w : config.widths) {
      m.meanfield.mean.emplace_back(config.num_inducing, w, 0.0);
      m.meanfield.chol_packed.emplace_back(
          config.num_inducing * (config.num_inducing + 1) / 2, w, 0.0);
    }
  }
  return m;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "dgpflow-checkpoint v1")
    throw CheckpointError("'" + path + "' is not a v1 checkpoint");

  LoadedCheckpoint ck;
  std::map<std::string, std::string> header;
  std::string first_block_name;
  std::size_t first_block_count = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    if (key == "block") {
      if (!(ls >> first_block_name >> first_block_count))
        throw CheckpointError("malformed block header in '" + path + "'");
      break;
    }
    if (key == "end") break;
    std::string rest;
    std::getline(ls, rest);
    header[key] = detail::trim(rest);
  }

  const auto need = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end())
      throw CheckpointError("checkpoint missing '" + key + "'");
    return it->second;
  };
  const auto to_count = [&](const std::string& key) {
    const std::string& s = need(key);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size())
      throw CheckpointError("bad integer for '" + key + "'");
    return static_cast<std::size_t>(v);
  };

  ck.config.posterior = posterior_from_name(need("posterior"));
  {
    std::istringstream ws(need("widths"));
    std::size_t w;
    while (ws >> w) ck.config.widths.push_back(w);
    if (ck.config.widths.empty())
      throw CheckpointError("checkpoint has no layer widths");
  }
  ck.config.num_inducing = to_count("inducing");
  ck.config.flow_steps = to_count("flow_steps");
  ck.config.flow_activation = to_count("activation") != 0;
  ck.config.iterations = to_count("iterations");
  ck.config.learning_rate =
      detail::parse_hexfloat(need("learning_rate"), "learning_rate");
  ck.config.minibatch = to_count("minibatch");
  ck.config.mc_samples = to_count("mc_samples");
  ck.config.seed = static_cast<std::uint64_t>(to_count("seed"));
  ck.config.jitter = detail::parse_hexfloat(need("jitter"), "jitter");

  const std::size_t input_dim = to_count("input_dim");
  {
    std::istringstream ms(need("x_mean")), ss(need("x_std"));
    std::string tok;
    while (ms >> tok)
      ck.stats.x_mean.push_back(detail::parse_hexfloat(tok, "x_mean"));
    while (ss >> tok)
      ck.stats.x_std.push_back(detail::parse_hexfloat(tok, "x_std"));
  }
  if (ck.stats.x_mean.size() != input_dim ||
      ck.stats.x_std.size() != input_dim)
    throw CheckpointError("standardization stats do not match input_dim");
  ck.stats.y_mean = detail::parse_hexfloat(need("y_mean"), "y_mean");
  ck.stats.y_std = detail::parse_hexfloat(need("y_std"), "y_std");
  ck.feature_names = detail::split_names(need("features"));
  ck.target_name = need("target");
  if (ck.feature_names.size() != input_dim)
    throw CheckpointError("feature names do not match input_dim");

  ck.model = rebuild_model(ck.config, input_dim);

  std::map<std::string, std::pair<double*, std::size_t>> slots;
  visit_trainable(ck.model,
                  [&](const std::string& name, double* data, std::size_t n) {
                    slots[name] = {data, n};
                  });

  std::map<std::string, bool> filled;
  std::string block_name = first_block_name;
  std::size_t block_count = first_block_count;
  bool in_block = !block_name.empty();
  bool saw_end = false;
  while (in_block) {
    auto it = slots.find(block_name);
    if (it == slots.end())
      throw CheckpointError("unknown block '" + block_name + "'");
    if (it->second.second != block_count)
      throw CheckpointError("block '" + block_name + "' has " +
                            std::to_string(block_count) + " values, expected " +
                            std::to_string(it->second.second));
    if (filled.count(block_name))
      throw CheckpointError("duplicate block '" + block_name + "'");
    double* dst = it->second.first;
    std::size_t got = 0;
    std::string tok;
    while (got < block_count && in >> tok)
      dst[got++] = detail::parse_hexfloat(tok, block_name);
    if (got != block_count)
      throw CheckpointError("block '" + block_name + "' is truncated");
    filled[block_name] = true;

    in_block = false;
    while (in >> tok) {
      if (tok == "end") {
        saw_end = true;
        break;
      }
      if (tok != "block")
        throw CheckpointError("unexpected token '" + tok + "'");
      if (!(in >> block_name >> block_count))
        throw CheckpointError("malformed block header");
      in_block = true;
      break;
    }
  }
  for (const auto& [name, slot] : slots)
    if (!filled.count(name))
      throw CheckpointError("checkpoint missing block '" + name + "'");
  if (!saw_end) throw CheckpointError("checkpoint missing end marker");
  return ck;
}

// Atomic file write: stage to <path>.tmp, fsync-free rename into place.
inline void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << content;
    if (!out.good()) throw Error("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("cannot rename '" + tmp + "' to '" + path + "'");
}

inline void save_checkpoint(const std::string& path, const DgpModel& model,
                            const TrainConfig& config, const DataStats& stats,
                            const std::vector<std::string>& features,
                            const std::string& target) {
  atomic_write(path,
               serialize_checkpoint(model, config, stats, features, target));
}

}  // namespace dgpflow

#endif  // DGPFLOW_CHECKPOINT_HPP_
