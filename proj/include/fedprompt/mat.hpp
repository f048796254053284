// Copyright 2026 The FedPrompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDPROMPT_MAT_HPP
#define FEDPROMPT_MAT_HPP

#include <cstddef>
#include <vector>

namespace fedprompt {

// Dense row-major matrix of doubles. Deliberately minimal: the kernels
// module does the arithmetic, this type only owns storage.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    a.assign(r * c, 0.0);
  }

  void zero() { a.assign(a.size(), 0.0); }

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return a[i * cols + j];
  }

  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

}  // namespace fedprompt

#endif  // FEDPROMPT_MAT_HPP
