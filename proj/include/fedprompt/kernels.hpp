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

#ifndef FEDPROMPT_KERNELS_HPP
#define FEDPROMPT_KERNELS_HPP

#include <cstddef>
#include <string_view>

// Arithmetic inner loops behind the model and the aggregator. Two variants
// exist: a scalar reference and an AVX2 one, selected once at startup by a
// CPUID probe (overridable via the FEDPROMPT_KERNEL environment variable or
// select_backend()). The variants are bit-identical by construction:
//
//   - element-wise kernels (axpy, scale) perform the same rounded operation
//     per element in both paths;
//   - reductions (dot, sumsq) accumulate into four lanes, lane L taking the
//     elements with index % 4 == L over the aligned prefix, are reduced as
//     ((lane0 + lane1) + (lane2 + lane3)), and append the tail sequentially.
//
// Equivalence is enforced by tests that compare the two paths bit for bit.

namespace fedprompt::kernels {

// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

// sum_i x[i]^2
double sumsq(const double* x, std::size_t n);

// x[i] *= alpha
void scale(double* x, std::size_t n, double alpha);

// Name of the variant currently in use ("scalar" or "avx2").
std::string_view active_backend();

// Force a variant: "scalar", "avx2" or "auto". Returns false (and leaves the
// selection unchanged) if the requested variant is unavailable on this CPU.
bool select_backend(std::string_view name);

bool avx2_supported();

}  // namespace fedprompt::kernels

#endif  // FEDPROMPT_KERNELS_HPP
