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

#ifndef DGPFLOW_MATRIX_HPP_
#define DGPFLOW_MATRIX_HPP_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dgpflow/errors.hpp"

namespace dgpflow {

// Dense row-major matrix over an arbitrary scalar. T is double for plain
// numerics and Var (tape.hpp) inside differentiated computations.
template <class T>
class Mat {
 public:
  Mat() : rows_(0), cols_(0) {}
  Mat(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {}
  Mat(std::size_t rows, std::size_t cols, const T& fill)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

 private:
  std::size_t rows_, cols_;
  std::vector<T> data_;
};

using Matrix = Mat<double>;

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

inline Matrix eye(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

template <class T>
Mat<T> transpose(const Mat<T>& a) {
  Mat<T> r(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) r(j, i) = a(i, j);
  return r;
}

namespace detail {
template <class A, class B>
struct Promote {
  using type = decltype(std::declval<A>() * std::declval<B>());
};
template <class A, class B>
using promote_t = typename Promote<A, B>::type;
}  // namespace detail

// C = A B. Inner dimension must be nonzero; sums are accumulated in index
// order so results are bit-reproducible.
template <class A, class B>
Mat<detail::promote_t<A, B>> matmul(const Mat<A>& a, const Mat<B>& b) {
  check_shape(a.cols() == b.rows() && a.cols() > 0, "matmul: inner dimension");
  Mat<detail::promote_t<A, B>> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      auto s = a(i, 0) * b(0, j);
      for (std::size_t k = 1; k < a.cols(); ++k) s = s + a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

template <class A, class B>
Mat<detail::promote_t<A, B>> operator+(const Mat<A>& a, const Mat<B>& b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mat add: shape");
  Mat<detail::promote_t<A, B>> c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
  return c;
}

template <class A, class B>
Mat<detail::promote_t<A, B>> operator-(const Mat<A>& a, const Mat<B>& b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mat sub: shape");
  Mat<detail::promote_t<A, B>> c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  return c;
}

}  // namespace dgpflow

#endif  // DGPFLOW_MATRIX_HPP_
