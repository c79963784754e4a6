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

#ifndef DGPFLOW_DATASET_HPP_
#define DGPFLOW_DATASET_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dgpflow/errors.hpp"
#include "dgpflow/matrix.hpp"
#include "dgpflow/model.hpp"
#include "dgpflow/rng.hpp"

namespace dgpflow {

struct Dataset {
  Matrix x;  // N x D
  std::vector<double> y;
  std::vector<std::string> feature_names;
  std::string target_name;
  std::size_t rejected_rows = 0;        // rows dropped for missing values
  std::vector<std::string> warnings;    // e.g. dropped constant columns
};

struct DataStats {
  std::vector<double> x_mean, x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline bool is_missing_token(const std::string& s) {
  if (s.empty()) return true;
  std::string low;
  for (char c : s) low.push_back(static_cast<char>(std::tolower(c)));
  return low == "na" || low == "n/a" || low == "nan" || low == "null" ||
         low == "?";
}

// Strict numeric parse: the whole cell must be consumed and the value must
// be finite. Returns false for a recognized missing token.
inline bool parse_cell(const std::string& cell, std::size_t line_no,
                       const std::string& col_name, double* out) {
  if (is_missing_token(cell)) return false;
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + cell.size())
    throw ParseError("line " + std::to_string(line_no) +
                     ", column '" + col_name + "': cannot parse '" + cell +
                     "' as a number");
  if (!std::isfinite(v)) {
    if (std::isnan(v)) return false;  // "nan" spelled in some other casing
    throw ParseError("line " + std::to_string(line_no) + ", column '" +
                     col_name + "': non-finite value");
  }
  *out = v;
  return true;
}

}  // namespace detail

// CSV reader: header row of names, numeric body. Rows with missing cells
// are dropped and counted; a malformed cell is an error naming its line and
// column; feature columns that are constant across the file are dropped
// with a warning. target_name selects the target column, empty means the
// last column.
inline Dataset ingest_csv(const std::string& path,
                          const std::string& target_name = "") {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw EmptyDataset("'" + path + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF)
    line = line.substr(3);

  std::vector<std::string> names = detail::split_line(line);
  const std::size_t ncol = names.size();
  for (const std::string& n : names)
    if (n.empty()) throw ParseError("header has an empty column name");
  if (ncol < 2)
    throw EmptyDataset("'" + path + "' has no feature columns");

  std::size_t target = ncol - 1;
  if (!target_name.empty()) {
    bool found = false;
    for (std::size_t j = 0; j < ncol; ++j)
      if (names[j] == target_name) {
        target = j;
        found = true;
        break;
      }
    if (!found)
      throw ConfigError("target column '" + target_name + "' not in '" +
                        path + "'");
  }

  std::vector<std::vector<double>> rows;
  std::size_t rejected = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != ncol)
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(ncol) + " columns, found " +
                       std::to_string(cells.size()));
    std::vector<double> vals(ncol);
    bool complete = true;
    for (std::size_t j = 0; j < ncol; ++j) {
      if (!detail::parse_cell(cells[j], line_no, names[j], &vals[j])) {
        complete = false;
        break;
      }
    }
    if (complete)
      rows.push_back(std::move(vals));
    else
      ++rejected;
  }
  if (rows.empty())
    throw EmptyDataset("'" + path + "' has no usable rows (" +
                       std::to_string(rejected) + " rejected)");

  Dataset d;
  d.rejected_rows = rejected;
  d.target_name = names[target];

  // Constant feature columns carry no signal and break standardization.
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < ncol; ++j) {
    if (j == target) continue;
    double lo = rows[0][j], hi = rows[0][j];
    for (const auto& r : rows) {
      lo = std::min(lo, r[j]);
      hi = std::max(hi, r[j]);
    }
    if (hi > lo) {
      keep.push_back(j);
      d.feature_names.push_back(names[j]);
    } else {
      d.warnings.push_back("dropped constant column '" + names[j] + "'");
    }
  }
  if (keep.empty())
    throw EmptyDataset("'" + path + "' has no non-constant feature columns");
  {
    double lo = rows[0][target], hi = rows[0][target];
    for (const auto& r : rows) {
      lo = std::min(lo, r[target]);
      hi = std::max(hi, r[target]);
    }
    if (!(hi > lo))
      throw EmptyDataset("target column '" + names[target] +
                         "' is constant; nothing to fit");
  }

  d.x = Matrix(rows.size(), keep.size());
  d.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < keep.size(); ++j) d.x(i, j) = rows[i][keep[j]];
    d.y[i] = rows[i][target];
  }
  return d;
}

struct SplitResult {
  Dataset train;     // standardized
  Dataset test;      // standardized with the training statistics
  Dataset test_raw;  // the same test rows in original units
  DataStats stats;
};

namespace detail {

inline void apply_stats(Dataset* d, const DataStats& s) {
  for (std::size_t i = 0; i < d->x.rows(); ++i)
    for (std::size_t j = 0; j < d->x.cols(); ++j)
      d->x(i, j) = (d->x(i, j) - s.x_mean[j]) / s.x_std[j];
  for (double& v : d->y) v = (v - s.y_mean) / s.y_std;
}

}  // namespace detail

// Seeded shuffle, fraction split, then standardization of both parts with
// training-split statistics (population mean and standard deviation).
inline SplitResult split_standardize(const Dataset& data, double fraction,
                                     std::uint64_t seed) {
  const std::size_t n = data.x.rows();
  if (n < 2) throw TooFewRows("split: need at least 2 rows");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw ConfigError("split: fraction must be in (0, 1)");
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  n_train = std::max<std::size_t>(1, std::min(n_train, n - 1));

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  SeededRng rng = SeededRng(seed).split(streams::kSplit);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(perm[i], perm[j]);
  }

  const std::size_t d = data.x.cols();
  SplitResult out;
  out.train.feature_names = out.test.feature_names = data.feature_names;
  out.train.target_name = out.test.target_name = data.target_name;
  out.train.x = Matrix(n_train, d);
  out.train.y.resize(n_train);
  out.test.x = Matrix(n - n_train, d);
  out.test.y.resize(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& dst = i < n_train ? out.train : out.test;
    const std::size_t r = i < n_train ? i : i - n_train;
    for (std::size_t j = 0; j < d; ++j) dst.x(r, j) = data.x(perm[i], j);
    dst.y[r] = data.y[perm[i]];
  }

  out.stats.x_mean.assign(d, 0.0);
  out.stats.x_std.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) mu += out.train.x(i, j);
    mu /= static_cast<double>(n_train);
    double ss = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) {
      const double c = out.train.x(i, j) - mu;
      ss += c * c;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n_train));
    if (!(sd > 1e-12))
      throw EmptyDataset("split: feature '" + data.feature_names[j] +
                         "' is constant on the training split");
    out.stats.x_mean[j] = mu;
    out.stats.x_std[j] = sd;
  }
  {
    double mu = 0.0;
    for (double v : out.train.y) mu += v;
    mu /= static_cast<double>(n_train);
    double ss = 0.0;
    for (double v : out.train.y) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / static_cast<double>(n_train));
    if (!(sd > 1e-12))
      throw EmptyDataset("split: target is constant on the training split");
    out.stats.y_mean = mu;
    out.stats.y_std = sd;
  }
  out.test_raw = out.test;
  detail::apply_stats(&out.train, out.stats);
  detail::apply_stats(&out.test, out.stats);
  return out;
}

// Standardize with previously stored statistics (evaluation path).
inline void standardize_with(Dataset* d, const DataStats& s) {
  if (d->x.cols() != s.x_mean.size())
    throw SchemaMismatch("data has " + std::to_string(d->x.cols()) +
                         " features, checkpoint expects " +
                         std::to_string(s.x_mean.size()));
  detail::apply_stats(d, s);
}

// 1-D toy generators: x uniform on [-1, 1]; "sine" is sin(4*pi*x), "step"
// is the sign of x (defined as -1 at 0). Per row, x is drawn before the
// noise so the inputs are identical across noise settings.
inline Dataset make_synthetic(const std::string& kind, std::size_t n,
                              double noise_sd, std::uint64_t seed) {
  if (kind != "sine" && kind != "step")
    throw ConfigError("make_synthetic: unknown kind '" + kind + "'");
  if (n == 0) throw ConfigError("make_synthetic: need rows");
  Dataset d;
  d.feature_names = {"x"};
  d.target_name = "y";
  d.x = Matrix(n, 1);
  d.y.resize(n);
  SeededRng rng(seed);
  constexpr double kFourPi = 12.566370614359172;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * rng.uniform();
    const double noise = noise_sd * rng.normal();
    d.x(i, 0) = x;
    d.y[i] = (kind == "sine" ? std::sin(kFourPi * x) : (x > 0.0 ? 1.0 : -1.0)) +
             noise;
  }
  return d;
}

// Log-likelihood of a single Gaussian fitted to the training targets,
// averaged over the test targets; the depth-zero baseline.
inline double baseline_gaussian_mll(const std::vector<double>& train_y,
                                    const std::vector<double>& test_y,
                                    double y_std = 1.0) {
  if (train_y.empty() || test_y.empty())
    throw TooFewRows("baseline_gaussian_mll: empty split");
  double mu = 0.0;
  for (double v : train_y) mu += v;
  mu /= static_cast<double>(train_y.size());
  double ss = 0.0;
  for (double v : train_y) ss += (v - mu) * (v - mu);
  const double var = ss / static_cast<double>(train_y.size());
  if (!(var > 0.0)) throw Error("baseline_gaussian_mll: degenerate target");
  double acc = 0.0;
  for (double v : test_y) acc += normal_logpdf(v, mu, var);
  return acc / static_cast<double>(test_y.size()) - std::log(y_std);
}

}  // namespace dgpflow

#endif  // DGPFLOW_DATASET_HPP_
