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

#include "fedprompt/privacy.hpp"

#include <algorithm>
#include <cmath>

#include "fedprompt/errors.hpp"
#include "fedprompt/kernels.hpp"
#include "fedprompt/rng.hpp"

namespace fedprompt::privacy {

namespace {

double median_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void clip_gradient(std::span<double> grad, double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw InvalidInput("clip_gradient: clip norm must be > 0");
  }
  const double sq = kernels::sumsq(grad.data(), grad.size());
  if (!std::isfinite(sq)) {
    throw NumericalError("clip_gradient: non-finite gradient");
  }
  // Rescaling can leave the recomputed norm an ulp above the bound, so
  // iterate until the check passes; that makes clipping exactly idempotent.
  double norm = std::sqrt(sq);
  while (norm > clip_norm) {
    kernels::scale(grad.data(), grad.size(), clip_norm / norm);
    norm = std::sqrt(kernels::sumsq(grad.data(), grad.size()));
  }
}

model::PromptTensor add_laplace(const model::PromptTensor& p, double scale,
                                std::uint64_t seed) {
  if (scale < 0.0) {
    throw InvalidInput("add_laplace: scale must be >= 0");
  }
  model::PromptTensor out = p;
  if (scale == 0.0) {
    return out;
  }
  rng::Engine gen(seed);
  for (double& v : out.values) {
    // Inverse CDF: u in (0,1) keeps the log argument in (0, 1].
    const double u = rng::uniform_open(gen);
    const double centered = u - 0.5;
    const double sign = centered < 0.0 ? -1.0 : 1.0;
    v += -scale * sign * std::log(1.0 - 2.0 * std::abs(centered));
  }
  return out;
}

ScreenResult screen_updates(
    const std::vector<const model::PromptTensor*>& updates,
    const ScreenSpec& spec) {
  if (!(spec.mad_threshold > 0.0)) {
    throw InvalidInput("screen_updates: threshold must be > 0");
  }
  ScreenResult result;
  const std::size_t n = updates.size();
  if (n < 3) {
    // Median of fewer than three points carries no information; wave the
    // round through but flag it.
    result.passthrough = true;
    for (std::size_t i = 0; i < n; ++i) result.accepted.push_back(i);
    return result;
  }

  std::vector<double> means(n), stds(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& vals = updates[i]->values;
    const std::size_t c = vals.size();
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    means[i] = mean;
    stds[i] = std::sqrt(var);
  }

  const auto robust_z = [](const std::vector<double>& xs) {
    const double med = median_sorted(xs);
    std::vector<double> dev(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = std::abs(xs[i] - med);
    const double mad = median_sorted(dev);
    std::vector<double> z(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      z[i] = dev[i] / (1.4826 * mad + 1e-12);
    }
    return z;
  };

  const std::vector<double> z_mean = robust_z(means);
  const std::vector<double> z_std = robust_z(stds);

  std::vector<double> worst(n);
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < n; ++i) {
    worst[i] = std::max(z_mean[i], z_std[i]);
    if (worst[i] > spec.mad_threshold) flagged.push_back(i);
  }

  // Quorum floor: never reject more than half. Excess rejections are waived
  // starting from the least anomalous.
  const std::size_t max_reject = n / 2;
  if (flagged.size() > max_reject) {
    std::sort(flagged.begin(), flagged.end(),
              [&](std::size_t a, std::size_t b) {
                if (worst[a] != worst[b]) return worst[a] < worst[b];
                return a < b;
              });
    flagged.erase(flagged.begin(),
                  flagged.begin() +
                      static_cast<std::ptrdiff_t>(flagged.size() - max_reject));
    std::sort(flagged.begin(), flagged.end());
  }

  std::size_t fi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (fi < flagged.size() && flagged[fi] == i) {
      result.rejected.push_back(i);
      ++fi;
    } else {
      result.accepted.push_back(i);
    }
  }
  return result;
}

}  // namespace fedprompt::privacy
