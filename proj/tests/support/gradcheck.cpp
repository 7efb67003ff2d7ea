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

#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "neurofuse/layers.hpp"
#include "neurofuse/recurrent.hpp"
#include "neurofuse/training.hpp"

namespace nf::testing {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (float& v : t.values()) v = static_cast<float>(uniform(rng, lo, hi));
  return t;
}

double probe(const Tensor& y, const Tensor& coefficients) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<double>(y[i]) * coefficients[i];
  return acc;
}

void FdStats::merge(const FdStats& other) {
  checked += other.checked;
  skipped += other.skipped;
  max_rel_error = std::max(max_rel_error, other.max_rel_error);
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

FdStats compare_fd(std::span<float> values, std::span<const float> analytic, const std::function<double()>& loss,
                   const FdOptions& options, Rng& rng) {
  std::vector<std::size_t> indices(values.size());
  std::iota(indices.begin(), indices.end(), 0);
  if (options.max_entries < indices.size()) {
    std::vector<std::size_t> chosen;
    std::sample(indices.begin(), indices.end(), std::back_inserter(chosen), options.max_entries, rng);
    indices = std::move(chosen);
  }

  auto quotient = [&](std::size_t i, double h) {
    const float original = values[i];
    const float up = static_cast<float>(original + h);
    const float down = static_cast<float>(original - h);
    values[i] = up;
    const double l_up = loss();
    values[i] = down;
    const double l_down = loss();
    values[i] = original;
    return (l_up - l_down) / (static_cast<double>(up) - static_cast<double>(down));
  };

  FdStats stats;
  for (std::size_t i : indices) {
    const double full = quotient(i, options.step);
    const double half = quotient(i, options.step / 2);
    if (relative_error(full, half, options.floor) > options.kink_tolerance) {
      ++stats.skipped;
      continue;
    }
    stats.max_rel_error = std::max(stats.max_rel_error, relative_error(analytic[i], full, options.floor));
    ++stats.checked;
  }
  return stats;
}

double GradientSuiteReport::skipped_fraction() const {
  const std::size_t total = stats.checked + stats.skipped;
  return total == 0 ? 1.0 : static_cast<double>(stats.skipped) / static_cast<double>(total);
}

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(uniform_int(rng, static_cast<long long>(lo), static_cast<long long>(hi)));
}

// Values with pairwise gaps of at least `gap`, in random order.
Tensor distinct_tensor(const Shape& shape, Rng& rng, double gap) {
  Tensor t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[order[i]] = static_cast<float>((static_cast<double>(i) - t.size() / 2.0) * gap);
  }
  return t;
}

// Random values kept at least `margin` away from zero.
Tensor off_zero_tensor(const Shape& shape, Rng& rng, double margin) {
  Tensor t(shape);
  for (float& v : t.values()) {
    const double magnitude = uniform(rng, margin, 1.0);
    v = static_cast<float>(uniform(rng, 0.0, 1.0) < 0.5 ? -magnitude : magnitude);
  }
  return t;
}

Extent3 random_extent(Rng& rng, std::size_t lo, std::size_t hi) {
  return {pick(rng, lo, hi), pick(rng, lo, hi), pick(rng, lo, hi)};
}

// Same padding takes odd kernel extents only.
Extent3 random_odd_kernel(Rng& rng) {
  return {2 * pick(rng, 0, 1) + 1, 2 * pick(rng, 0, 1) + 1, 2 * pick(rng, 0, 1) + 1};
}

}  // namespace

GradientSuiteReport conv3d_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  GradientSuiteReport report{"conv3d", instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    const Padding padding = pick(rng, 0, 1) ? Padding::kSame : Padding::kValid;
    const Extent3 kernel = padding == Padding::kSame ? random_odd_kernel(rng) : random_extent(rng, 1, 3);
    const Extent3 stride = random_extent(rng, 1, 2);
    const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    Conv3DLayer layer = Conv3DLayer::glorot(kernel, cin, cout, stride, padding, rng);
    layer.bias = random_tensor(layer.bias.shape(), rng, -0.5, 0.5);
    Tensor x = random_tensor(Shape{pick(rng, 3, 6), pick(rng, 3, 6), pick(rng, 3, 5), cin}, rng);

    auto fwd = conv3d_forward(layer, x);
    const Tensor coef = random_tensor(fwd.y.shape(), rng);
    const Conv3DGrads g = conv3d_backward(layer, fwd.cache, coef);
    auto loss = [&] { return probe(conv3d_forward(layer, x).y, coef); };
    report.stats.merge(compare_fd(x.values(), g.dx.values(), loss, options, rng));
    report.stats.merge(compare_fd(layer.kernels.values(), g.dkernels.values(), loss, options, rng));
    report.stats.merge(compare_fd(layer.bias.values(), g.dbias.values(), loss, options, rng));
  }
  return report;
}

GradientSuiteReport maxpool3d_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  GradientSuiteReport report{"maxpool3d", instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    MaxPool3DLayer layer{random_extent(rng, 1, 3), random_extent(rng, 1, 2)};
    const Shape shape{pick(rng, 3, 6), pick(rng, 3, 6), pick(rng, 3, 5), pick(rng, 1, 2)};
    // Gaps wider than the stencil keep every window's argmax fixed.
    Tensor x = distinct_tensor(shape, rng, 0.05);

    auto fwd = maxpool3d_forward(layer, x);
    const Tensor coef = random_tensor(fwd.y.shape(), rng);
    const Tensor dx = maxpool3d_backward(layer, fwd.cache, coef);
    auto loss = [&] { return probe(maxpool3d_forward(layer, x).y, coef); };
    report.stats.merge(compare_fd(x.values(), dx.values(), loss, options, rng));
  }
  return report;
}

GradientSuiteReport dense_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  GradientSuiteReport report{"dense", instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    DenseLayer layer = DenseLayer::glorot(pick(rng, 1, 8), pick(rng, 1, 8), rng);
    layer.bias = random_tensor(layer.bias.shape(), rng, -0.5, 0.5);
    Tensor x = random_tensor(Shape{layer.n_in()}, rng);

    auto fwd = dense_forward(layer, x);
    const Tensor coef = random_tensor(fwd.y.shape(), rng);
    const DenseGrads g = dense_backward(layer, fwd.cache, coef);
    auto loss = [&] { return probe(dense_forward(layer, x).y, coef); };
    report.stats.merge(compare_fd(x.values(), g.dx.values(), loss, options, rng));
    report.stats.merge(compare_fd(layer.weights.values(), g.dweights.values(), loss, options, rng));
    report.stats.merge(compare_fd(layer.bias.values(), g.dbias.values(), loss, options, rng));
  }
  return report;
}

GradientSuiteReport relu_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  GradientSuiteReport report{"relu", instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    Tensor x = off_zero_tensor(Shape{pick(rng, 1, 4), pick(rng, 1, 6)}, rng, 0.05);
    const Tensor coef = random_tensor(x.shape(), rng);
    const Tensor dx = relu_backward(x, coef);
    auto loss = [&] { return probe(relu_forward(x), coef); };
    report.stats.merge(compare_fd(x.values(), dx.values(), loss, options, rng));
  }
  return report;
}

GradientSuiteReport softmax_ce_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  GradientSuiteReport report{"softmax+ce", instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t classes = pick(rng, 2, 6);
    const int label = static_cast<int>(pick(rng, 0, classes - 1));
    Tensor logits = random_tensor(Shape{classes}, rng, -3.0, 3.0);
    const Tensor dl = softmax_ce_logit_gradient(softmax(logits), static_cast<std::size_t>(label));
    auto loss = [&] { return sparse_ce_loss(softmax(logits), label); };
    report.stats.merge(compare_fd(logits.values(), dl.values(), loss, options, rng));
  }
  return report;
}

GradientSuiteReport dropout_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  GradientSuiteReport report{"dropout", instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    const DropoutLayer layer{static_cast<float>(uniform(rng, 0.1, 0.6)), rng()};
    const std::uint64_t stream = rng();
    Tensor x = random_tensor(Shape{pick(rng, 2, 40)}, rng);
    auto fwd = dropout_forward(layer, x, true, stream);
    const Tensor coef = random_tensor(x.shape(), rng);
    const Tensor dx = dropout_backward(fwd.cache, coef);
    // Same layer seed and stream reproduce the mask.
    auto loss = [&] { return probe(dropout_forward(layer, x, true, stream).y, coef); };
    report.stats.merge(compare_fd(x.values(), dx.values(), loss, options, rng));
  }
  return report;
}

namespace {

template <class Layer>
GradientSuiteReport recurrent_suite(const char* name, std::size_t instances, std::uint64_t seed,
                                    const FdOptions& options) {
  GradientSuiteReport report{name, instances, {}};
  Rng rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t in = pick(rng, 1, 4), units = pick(rng, 1, 5), steps = pick(rng, 1, 6);
    Layer layer = Layer::glorot(in, units, pick(rng, 0, 1) == 1, rng);
    for (Tensor& b : layer.b) b = add(b, random_tensor(b.shape(), rng, -0.3, 0.3));
    Tensor xs = random_tensor(Shape{steps, in}, rng);

    auto fwd = recurrent_forward(layer, xs);
    const Tensor coef = random_tensor(fwd.y.shape(), rng);
    auto back = recurrent_backward(layer, fwd.cache, coef);
    auto loss = [&] { return probe(recurrent_forward(layer, xs).y, coef); };
    report.stats.merge(compare_fd(xs.values(), back.dxs.values(), loss, options, rng));
    std::vector<Tensor> grads = std::move(back.dparams).release();
    std::vector<Tensor*> params = layer.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      report.stats.merge(compare_fd(params[p]->values(), grads[p].values(), loss, options, rng));
    }
  }
  return report;
}

}  // namespace

GradientSuiteReport lstm_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  return recurrent_suite<LSTMLayer>("lstm", instances, seed, options);
}

GradientSuiteReport gru_gradient_suite(std::size_t instances, std::uint64_t seed, const FdOptions& options) {
  return recurrent_suite<GRULayer>("gru", instances, seed, options);
}

GradientSuiteReport time_distributed_gradient_suite(std::size_t instances, std::uint64_t seed,
                                                    const FdOptions& options) {
  GradientSuiteReport report{"time-distributed", instances, {}};
  Rng rng(seed);
  FdOptions sampled = options;
  sampled.max_entries = std::min<std::size_t>(options.max_entries, 48);
  for (std::size_t n = 0; n < instances; ++n) {
    const Shape frame{pick(rng, 4, 7), pick(rng, 4, 7), pick(rng, 2, 4), 1};
    ConvBlock block = ConvBlock::create(frame, random_odd_kernel(rng), pick(rng, 1, 3), rng);
    block.conv1.bias = random_tensor(block.conv1.bias.shape(), rng, -0.2, 0.4);
    block.conv2.bias = random_tensor(block.conv2.bias.shape(), rng, -0.2, 0.4);
    Tensor x = random_tensor(frame.prepend(pick(rng, 1, 4)), rng);

    auto fwd = time_distributed_forward(block, x);
    const Tensor coef = random_tensor(fwd.y.shape(), rng);
    auto [dx, grads] = time_distributed_backward(block, fwd.cache, coef);
    auto loss = [&] { return probe(time_distributed_forward(block, x).y, coef); };
    report.stats.merge(compare_fd(x.values(), dx.values(), loss, sampled, rng));
    std::vector<Tensor> g = std::move(grads).release();
    std::vector<Tensor*> params = block.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      report.stats.merge(compare_fd(params[p]->values(), g[p].values(), loss, sampled, rng));
    }
  }
  return report;
}

}  // namespace nf::testing
