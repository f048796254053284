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

#ifndef FEDPROMPT_KERNELS_IMPL_HPP
#define FEDPROMPT_KERNELS_IMPL_HPP

#include <cstddef>

// Internal: per-variant entry points wired up by the dispatcher.

namespace fedprompt::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
double sumsq_scalar(const double* x, std::size_t n);
void scale_scalar(double* x, std::size_t n, double alpha);

#if defined(FEDPROMPT_HAVE_AVX2_TU)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
double sumsq_avx2(const double* x, std::size_t n);
void scale_avx2(double* x, std::size_t n, double alpha);
#endif

}  // namespace fedprompt::kernels::detail

#endif  // FEDPROMPT_KERNELS_IMPL_HPP
