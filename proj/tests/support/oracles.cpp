// Copyright 2026 The NeuroFuse Authors
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

#include "oracles.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

namespace nf::testing {

namespace {

// Returns (out extent, low padding) for one axis.
std::pair<long, long> axis_geometry(long in, long k, long s, Padding padding) {
  if (padding == Padding::kValid) return {(in - k) / s + 1, 0};
  const long out = (in + s - 1) / s;
  long total = (out - 1) * s + k - in;
  if (total < 0) total = 0;
  return {out, total / 2};
}

}  // namespace

Tensor naive_conv3d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Extent3 stride, Padding padding) {
  const long d[3] = {static_cast<long>(x.shape()[0]), static_cast<long>(x.shape()[1]),
                     static_cast<long>(x.shape()[2])};
  const long cin = static_cast<long>(x.shape()[3]);
  const long k[3] = {static_cast<long>(kernels.shape()[0]), static_cast<long>(kernels.shape()[1]),
                     static_cast<long>(kernels.shape()[2])};
  const long cout = static_cast<long>(kernels.shape()[4]);
  const long s[3] = {static_cast<long>(stride.x), static_cast<long>(stride.y), static_cast<long>(stride.z)};
  long o[3];
  long pad[3];
  for (int a = 0; a < 3; ++a) std::tie(o[a], pad[a]) = axis_geometry(d[a], k[a], s[a], padding);

  Tensor y(Shape{static_cast<std::size_t>(o[0]), static_cast<std::size_t>(o[1]), static_cast<std::size_t>(o[2]),
                 static_cast<std::size_t>(cout)});
  auto u = [](long v) { return static_cast<std::size_t>(v); };
  for (long i = 0; i < o[0]; ++i)
    for (long j = 0; j < o[1]; ++j)
      for (long l = 0; l < o[2]; ++l)
        for (long co = 0; co < cout; ++co) {
          double acc = bias[u(co)];
          for (long a = 0; a < k[0]; ++a)
            for (long b = 0; b < k[1]; ++b)
              for (long c = 0; c < k[2]; ++c) {
                const long xi = i * s[0] + a - pad[0];
                const long xj = j * s[1] + b - pad[1];
                const long xl = l * s[2] + c - pad[2];
                if (xi < 0 || xj < 0 || xl < 0 || xi >= d[0] || xj >= d[1] || xl >= d[2]) continue;
                for (long ci = 0; ci < cin; ++ci) {
                  acc += static_cast<double>(x.at({u(xi), u(xj), u(xl), u(ci)})) *
                         kernels.at({u(a), u(b), u(c), u(ci), u(co)});
                }
              }
          y.at({u(i), u(j), u(l), u(co)}) = static_cast<float>(acc);
        }
  return y;
}

Tensor naive_maxpool3d(const Tensor& x, Extent3 window, Extent3 stride) {
  const std::size_t o0 = (x.shape()[0] - window.x) / stride.x + 1;
  const std::size_t o1 = (x.shape()[1] - window.y) / stride.y + 1;
  const std::size_t o2 = (x.shape()[2] - window.z) / stride.z + 1;
  const std::size_t ch = x.shape()[3];
  Tensor y(Shape{o0, o1, o2, ch});
  for (std::size_t i = 0; i < o0; ++i)
    for (std::size_t j = 0; j < o1; ++j)
      for (std::size_t l = 0; l < o2; ++l)
        for (std::size_t c = 0; c < ch; ++c) {
          float best = -std::numeric_limits<float>::infinity();
          for (std::size_t a = 0; a < window.x; ++a)
            for (std::size_t b = 0; b < window.y; ++b)
              for (std::size_t e = 0; e < window.z; ++e) {
                best = std::max(best, x.at({i * stride.x + a, j * stride.y + b, l * stride.z + e, c}));
              }
          y.at({i, j, l, c}) = best;
        }
  return y;
}

double pairwise_auc(std::span<const int> truth, std::span<const std::vector<double>> scores, int k) {
  double credit = 0.0;
  double pairs = 0.0;
  const auto kk = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != k) continue;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[j] == k) continue;
      pairs += 1.0;
      if (scores[i][kk] > scores[j][kk]) {
        credit += 1.0;
      } else if (scores[i][kk] == scores[j][kk]) {
        credit += 0.5;
      }
    }
  }
  return credit / pairs;
}

}  // namespace nf::testing
