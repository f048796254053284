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

#include "fedprompt/kernels.hpp"

#include <atomic>
#include <cstdlib>

#include "kernels_impl.hpp"

namespace fedprompt::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double sum = (s0 + s1) + (s2 + s3);
  for (std::size_t i = n4; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

double sumsq_scalar(const double* x, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (std::size_t i = 0; i < n4; i += 4) {
    s0 += x[i] * x[i];
    s1 += x[i + 1] * x[i + 1];
    s2 += x[i + 2] * x[i + 2];
    s3 += x[i + 3] * x[i + 3];
  }
  double sum = (s0 + s1) + (s2 + s3);
  for (std::size_t i = n4; i < n; ++i) {
    sum += x[i] * x[i];
  }
  return sum;
}

void scale_scalar(double* x, std::size_t n, double alpha) {
  for (std::size_t i = 0; i < n; ++i) {
    x[i] *= alpha;
  }
}

}  // namespace detail

namespace {

struct Backend {
  const char* name;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  void (*scale)(double*, std::size_t, double);
};

constexpr Backend kScalar{"scalar", detail::dot_scalar, detail::axpy_scalar,
                          detail::sumsq_scalar, detail::scale_scalar};

#if defined(FEDPROMPT_HAVE_AVX2_TU)
constexpr Backend kAvx2{"avx2", detail::dot_avx2, detail::axpy_avx2,
                        detail::sumsq_avx2, detail::scale_avx2};
#endif

bool cpu_has_avx2() {
#if defined(FEDPROMPT_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

const Backend* pick_default() {
#if defined(FEDPROMPT_HAVE_AVX2_TU)
  if (cpu_has_avx2()) {
    if (const char* env = std::getenv("FEDPROMPT_KERNEL");
        env != nullptr && std::string_view(env) == "scalar") {
      return &kScalar;
    }
    return &kAvx2;
  }
#endif
  return &kScalar;
}

std::atomic<const Backend*> g_backend{nullptr};

const Backend& active() {
  const Backend* b = g_backend.load(std::memory_order_acquire);
  if (b == nullptr) {
    b = pick_default();
    g_backend.store(b, std::memory_order_release);
  }
  return *b;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

double sumsq(const double* x, std::size_t n) { return active().sumsq(x, n); }

void scale(double* x, std::size_t n, double alpha) {
  active().scale(x, n, alpha);
}

std::string_view active_backend() { return active().name; }

bool select_backend(std::string_view name) {
  if (name == "scalar") {
    g_backend.store(&kScalar, std::memory_order_release);
    return true;
  }
#if defined(FEDPROMPT_HAVE_AVX2_TU)
  if (name == "avx2" && cpu_has_avx2()) {
    g_backend.store(&kAvx2, std::memory_order_release);
    return true;
  }
#endif
  if (name == "auto") {
    g_backend.store(pick_default(), std::memory_order_release);
    return true;
  }
  return false;
}

bool avx2_supported() { return cpu_has_avx2(); }

}  // namespace fedprompt::kernels
