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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "neurofuse/random.hpp"
#include "neurofuse/tensor.hpp"

namespace nf {

// Output of a forward pass together with whatever backward needs.
template <class Cache>
struct Forward {
  Tensor y;
  Cache cache;
};

struct Extent3 {
  std::size_t x = 1, y = 1, z = 1;
  std::size_t operator[](std::size_t a) const { return a == 0 ? x : (a == 1 ? y : z); }
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

enum class Padding { kSame, kValid };

// Extent arithmetic shared by layers and the shape-only architecture planner.
// "Same" padding yields ceil(in / stride); "valid" yields (in - k) / stride + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);
std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride);

// Uniform in [-limit, limit], limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// 3D convolution over channel-last volumes [d1, d2, d3, c].

struct Conv3DLayer {
  Tensor kernels;  // [kx, ky, kz, c_in, c_out]
  Tensor bias;     // [c_out]
  Extent3 stride{1, 1, 1};
  Padding padding = Padding::kSame;

  // Zero-initialized layer; invariants checked.
  static Conv3DLayer zeros(Extent3 kernel, std::size_t c_in, std::size_t c_out, Extent3 stride,
                           Padding padding);
  static Conv3DLayer glorot(Extent3 kernel, std::size_t c_in, std::size_t c_out, Extent3 stride,
                            Padding padding, Rng& rng);

  Extent3 kernel() const { return {kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]}; }
  std::size_t in_channels() const { return kernels.shape()[3]; }
  std::size_t out_channels() const { return kernels.shape()[4]; }

  // Output shape for an input of `input` shape; throws ShapeError.
  Shape output_shape(const Shape& input) const;

  std::vector<Tensor*> parameters() { return {&kernels, &bias}; }
  std::vector<const Tensor*> parameters() const { return {&kernels, &bias}; }
};

struct Conv3DCache {
  Tensor input;
};

struct Conv3DGrads {
  Tensor dx;
  Tensor dkernels;
  Tensor dbias;
};

Forward<Conv3DCache> conv3d_forward(const Conv3DLayer& layer, const Tensor& x);
Conv3DGrads conv3d_backward(const Conv3DLayer& layer, const Conv3DCache& cache, const Tensor& dy);

// ---------------------------------------------------------------------------
// 3D max pooling. Ties go to the lowest flat input index.

struct MaxPool3DLayer {
  Extent3 window{2, 2, 2};
  Extent3 stride{2, 2, 2};

  Shape output_shape(const Shape& input) const;
};

struct MaxPool3DCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

Forward<MaxPool3DCache> maxpool3d_forward(const MaxPool3DLayer& layer, const Tensor& x);
Tensor maxpool3d_backward(const MaxPool3DLayer& layer, const MaxPool3DCache& cache, const Tensor& dy);

// ---------------------------------------------------------------------------
// Fully connected: y = x^T W + b.

struct DenseLayer {
  Tensor weights;  // [n_in, n_out]
  Tensor bias;     // [n_out]

  static DenseLayer zeros(std::size_t n_in, std::size_t n_out);
  static DenseLayer glorot(std::size_t n_in, std::size_t n_out, Rng& rng);

  std::size_t n_in() const { return weights.shape()[0]; }
  std::size_t n_out() const { return weights.shape()[1]; }

  std::vector<Tensor*> parameters() { return {&weights, &bias}; }
  std::vector<const Tensor*> parameters() const { return {&weights, &bias}; }
};

struct DenseCache {
  Tensor input;
};

struct DenseGrads {
  Tensor dx;
  Tensor dweights;
  Tensor dbias;
};

Forward<DenseCache> dense_forward(const DenseLayer& layer, const Tensor& x);
DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache, const Tensor& dy);

// ---------------------------------------------------------------------------
// Activations.

Tensor relu_forward(const Tensor& x);
// Passes dy where input > 0; the subgradient at 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& dy);

// Max-shifted softmax over a rank-1 tensor with at least two entries.
Tensor softmax(const Tensor& logits);
// Vector-Jacobian product of softmax given its output.
Tensor softmax_backward(const Tensor& probabilities, const Tensor& dy);
// Gradient of -log(softmax(l)[label]) with respect to l: probabilities - onehot(label).
Tensor softmax_ce_logit_gradient(const Tensor& probabilities, std::size_t label);

// ---------------------------------------------------------------------------
// Inverted dropout.

struct DropoutLayer {
  float rate = 0.1f;
  std::uint64_t rng_seed = 0;
};

struct DropoutCache {
  Tensor mask;  // per-element multiplier: 0 or 1/(1-rate); all ones at inference
};

// `stream` selects an independent mask for each forward call under one seed.
Forward<DropoutCache> dropout_forward(const DropoutLayer& layer, const Tensor& x, bool training,
                                      std::uint64_t stream = 0);
Tensor dropout_backward(const DropoutCache& cache, const Tensor& dy);

// ---------------------------------------------------------------------------
// Frame encoders used by the time-distributed wrapper. Each takes a volume
// [d1, d2, d3, c] and returns a flat feature vector.

// conv(stride 2) -> relu -> pool -> conv(stride 1) -> relu -> pool -> flatten.
struct ConvBlock {
  Conv3DLayer conv1;
  MaxPool3DLayer pool1;
  Conv3DLayer conv2;
  MaxPool3DLayer pool2;

  // Builds the block for volumes of `input` shape. Pool windows shrink to 1
  // along axes whose extent has already reached 1.
  static ConvBlock create(const Shape& input, Extent3 kernel, std::size_t filters, Rng& rng);

  struct Cache {
    Conv3DCache conv1;
    Tensor pre1;
    MaxPool3DCache pool1;
    Conv3DCache conv2;
    Tensor pre2;
    MaxPool3DCache pool2;
  };

  struct Grads {
    Tensor dkernels1, dbias1, dkernels2, dbias2;
    void add(const Grads& other);
    std::vector<Tensor> release() &&;
  };

  // Per-stage output shapes (conv1, pool1, conv2, pool2) computed from
  // extents alone, without allocating the block.
  static std::array<Shape, 4> plan(const Shape& input, Extent3 kernel, std::size_t filters);

  std::array<Shape, 4> stage_shapes(const Shape& input) const;
  std::size_t output_width(const Shape& input) const;

  Forward<Cache> forward(const Tensor& x) const;
  // Returns (dx, parameter gradients) given the gradient of the flat output.
  std::pair<Tensor, Grads> backward(const Cache& cache, const Tensor& dflat) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

// Parameter-free encoder: flattens the frame.
struct FlattenEncoder {
  struct Cache {
    Shape input_shape;
  };
  struct Grads {
    void add(const Grads&) {}
    std::vector<Tensor> release() && { return {}; }
  };

  std::size_t output_width(const Shape& input) const { return input.numel(); }
  Forward<Cache> forward(const Tensor& x) const { return {flatten(x), {x.shape()}}; }
  std::pair<Tensor, Grads> backward(const Cache& cache, const Tensor& dflat) const {
    return {reshape(dflat, cache.input_shape), {}};
  }
  std::vector<Tensor*> parameters() { return {}; }
  std::vector<const Tensor*> parameters() const { return {}; }
};

template <class Encoder>
struct TimeDistributedCache {
  std::vector<typename Encoder::Cache> frames;
};

// Applies one shared-parameter encoder to every frame of x [T, ...] and
// stacks the results into [T, N].
template <class Encoder>
Forward<TimeDistributedCache<Encoder>> time_distributed_forward(const Encoder& inner, const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("time-distributed input needs a leading time axis");
  const std::size_t frames = x.shape()[0];
  TimeDistributedCache<Encoder> cache;
  cache.frames.reserve(frames);
  std::vector<float> rows;
  std::size_t width = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    try {
      auto out = inner.forward(x.slice_leading(t));
      width = out.y.size();
      rows.insert(rows.end(), out.y.values().begin(), out.y.values().end());
      cache.frames.push_back(std::move(out.cache));
    } catch (const ShapeError& e) {
      throw ShapeError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return {Tensor(Shape{frames, width}, std::move(rows)), std::move(cache)};
}

// Returns dx [T, ...] and parameter gradients summed over frames.
template <class Encoder>
std::pair<Tensor, typename Encoder::Grads> time_distributed_backward(
    const Encoder& inner, const TimeDistributedCache<Encoder>& cache, const Tensor& dy) {
  const std::size_t frames = cache.frames.size();
  if (dy.rank() != 2 || dy.shape()[0] != frames) {
    throw ShapeError("time-distributed gradient shape " + dy.shape().to_string() + " does not match " +
                     std::to_string(frames) + " frames");
  }
  std::vector<Tensor> dframes;
  dframes.reserve(frames);
  typename Encoder::Grads total{};
  for (std::size_t t = 0; t < frames; ++t) {
    auto [dx, grads] = inner.backward(cache.frames[t], dy.slice_leading(t));
    if (t == 0) {
      total = std::move(grads);
    } else {
      total.add(grads);
    }
    dframes.push_back(std::move(dx));
  }
  return {stack(dframes), std::move(total)};
}

}  // namespace nf
