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

#include "neurofuse/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nf {

namespace {

struct AxisPlan {
  std::size_t out = 0;
  std::size_t pad_lo = 0;
};

AxisPlan plan_axis(std::size_t in, std::size_t k, std::size_t s, Padding padding, const char* who) {
  AxisPlan p;
  if (padding == Padding::kSame) {
    p.out = (in + s - 1) / s;
    const std::size_t span = (p.out - 1) * s + k;
    p.pad_lo = span > in ? (span - in) / 2 : 0;
  } else {
    if (in < k) {
      throw ShapeError(std::string(who) + ": extent " + std::to_string(in) + " smaller than kernel " +
                       std::to_string(k));
    }
    p.out = (in - k) / s + 1;
  }
  return p;
}

void require_volume(const Tensor& x, const char* who) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(who) + " expects [d1,d2,d3,c], got " + x.shape().to_string());
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  return plan_axis(in, kernel, stride, padding, "conv3d").out;
}

std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (in < window) {
    throw ShapeError("maxpool3d: extent " + std::to_string(in) + " smaller than window " + std::to_string(window));
  }
  return (in - window) / stride + 1;
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(shape);
  for (float& v : t.values()) v = static_cast<float>(dist(rng));
  return t;
}

// --- Conv3D ----------------------------------------------------------------

Conv3DLayer Conv3DLayer::zeros(Extent3 kernel, std::size_t c_in, std::size_t c_out, Extent3 stride,
                               Padding padding) {
  if (c_out < 1 || c_in < 1) throw ShapeError("conv3d channel counts must be >= 1");
  if (stride.x < 1 || stride.y < 1 || stride.z < 1) throw ShapeError("conv3d stride must be >= 1");
  if (padding == Padding::kSame && (kernel.x % 2 == 0 || kernel.y % 2 == 0 || kernel.z % 2 == 0)) {
    throw ShapeError("conv3d same padding requires odd kernel extents");
  }
  Conv3DLayer layer;
  layer.kernels = Tensor(Shape{kernel.x, kernel.y, kernel.z, c_in, c_out});
  layer.bias = Tensor(Shape{c_out});
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

Conv3DLayer Conv3DLayer::glorot(Extent3 kernel, std::size_t c_in, std::size_t c_out, Extent3 stride,
                                Padding padding, Rng& rng) {
  Conv3DLayer layer = zeros(kernel, c_in, c_out, stride, padding);
  const std::size_t receptive = kernel.x * kernel.y * kernel.z;
  layer.kernels = glorot_uniform(layer.kernels.shape(), receptive * c_in, receptive * c_out, rng);
  return layer;
}

Shape Conv3DLayer::output_shape(const Shape& input) const {
  if (input.rank() != 4) throw ShapeError("conv3d expects [d1,d2,d3,c], got " + input.to_string());
  if (input[3] != in_channels()) {
    throw ShapeError("conv3d channel mismatch: input has " + std::to_string(input[3]) + ", layer expects " +
                     std::to_string(in_channels()));
  }
  const Extent3 k = kernel();
  std::vector<std::size_t> out(4);
  for (std::size_t a = 0; a < 3; ++a) out[a] = plan_axis(input[a], k[a], stride[a], padding, "conv3d").out;
  out[3] = out_channels();
  return Shape(out);
}

Forward<Conv3DCache> conv3d_forward(const Conv3DLayer& layer, const Tensor& x) {
  require_volume(x, "conv3d");
  const Shape out_shape = layer.output_shape(x.shape());
  const Extent3 k = layer.kernel();
  const std::size_t cin = layer.in_channels(), cout = layer.out_channels();
  const std::size_t d1 = x.shape()[0], d2 = x.shape()[1], d3 = x.shape()[2];
  const AxisPlan px = plan_axis(d1, k.x, layer.stride.x, layer.padding, "conv3d");
  const AxisPlan py = plan_axis(d2, k.y, layer.stride.y, layer.padding, "conv3d");
  const AxisPlan pz = plan_axis(d3, k.z, layer.stride.z, layer.padding, "conv3d");

  Tensor y(out_shape);
  const float* xd = x.data();
  const float* kd = layer.kernels.data();
  const float* bd = layer.bias.data();
  float* yd = y.data();
  for (std::size_t ox = 0; ox < px.out; ++ox) {
    for (std::size_t oy = 0; oy < py.out; ++oy) {
      for (std::size_t oz = 0; oz < pz.out; ++oz) {
        float* yv = yd + ((ox * py.out + oy) * pz.out + oz) * cout;
        std::copy(bd, bd + cout, yv);
        for (std::size_t kx = 0; kx < k.x; ++kx) {
          const long long ix = static_cast<long long>(ox * layer.stride.x + kx) - static_cast<long long>(px.pad_lo);
          if (ix < 0 || ix >= static_cast<long long>(d1)) continue;
          for (std::size_t ky = 0; ky < k.y; ++ky) {
            const long long iy = static_cast<long long>(oy * layer.stride.y + ky) - static_cast<long long>(py.pad_lo);
            if (iy < 0 || iy >= static_cast<long long>(d2)) continue;
            for (std::size_t kz = 0; kz < k.z; ++kz) {
              const long long iz = static_cast<long long>(oz * layer.stride.z + kz) - static_cast<long long>(pz.pad_lo);
              if (iz < 0 || iz >= static_cast<long long>(d3)) continue;
              const float* xv = xd + ((static_cast<std::size_t>(ix) * d2 + static_cast<std::size_t>(iy)) * d3 +
                                      static_cast<std::size_t>(iz)) * cin;
              const float* kv = kd + ((kx * k.y + ky) * k.z + kz) * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const float xval = xv[ci];
                const float* kc = kv + ci * cout;
                for (std::size_t o = 0; o < cout; ++o) yv[o] += xval * kc[o];
              }
            }
          }
        }
      }
    }
  }
  check_finite(y, "conv3d_forward");
  return {std::move(y), {x}};
}

Conv3DGrads conv3d_backward(const Conv3DLayer& layer, const Conv3DCache& cache, const Tensor& dy) {
  const Tensor& x = cache.input;
  require_volume(x, "conv3d_backward");
  const Shape out_shape = layer.output_shape(x.shape());
  if (!(dy.shape() == out_shape)) {
    throw ShapeError("conv3d_backward: gradient shape " + dy.shape().to_string() + " != output shape " +
                     out_shape.to_string());
  }
  const Extent3 k = layer.kernel();
  const std::size_t cin = layer.in_channels(), cout = layer.out_channels();
  const std::size_t d1 = x.shape()[0], d2 = x.shape()[1], d3 = x.shape()[2];
  const AxisPlan px = plan_axis(d1, k.x, layer.stride.x, layer.padding, "conv3d");
  const AxisPlan py = plan_axis(d2, k.y, layer.stride.y, layer.padding, "conv3d");
  const AxisPlan pz = plan_axis(d3, k.z, layer.stride.z, layer.padding, "conv3d");

  Conv3DGrads g{Tensor(x.shape()), Tensor(layer.kernels.shape()), Tensor(layer.bias.shape())};
  const float* xd = x.data();
  const float* kd = layer.kernels.data();
  const float* dyd = dy.data();
  float* dxd = g.dx.data();
  float* dkd = g.dkernels.data();
  float* dbd = g.dbias.data();
  for (std::size_t ox = 0; ox < px.out; ++ox) {
    for (std::size_t oy = 0; oy < py.out; ++oy) {
      for (std::size_t oz = 0; oz < pz.out; ++oz) {
        const float* dyv = dyd + ((ox * py.out + oy) * pz.out + oz) * cout;
        for (std::size_t o = 0; o < cout; ++o) dbd[o] += dyv[o];
        for (std::size_t kx = 0; kx < k.x; ++kx) {
          const long long ix = static_cast<long long>(ox * layer.stride.x + kx) - static_cast<long long>(px.pad_lo);
          if (ix < 0 || ix >= static_cast<long long>(d1)) continue;
          for (std::size_t ky = 0; ky < k.y; ++ky) {
            const long long iy = static_cast<long long>(oy * layer.stride.y + ky) - static_cast<long long>(py.pad_lo);
            if (iy < 0 || iy >= static_cast<long long>(d2)) continue;
            for (std::size_t kz = 0; kz < k.z; ++kz) {
              const long long iz = static_cast<long long>(oz * layer.stride.z + kz) - static_cast<long long>(pz.pad_lo);
              if (iz < 0 || iz >= static_cast<long long>(d3)) continue;
              const std::size_t xoff = ((static_cast<std::size_t>(ix) * d2 + static_cast<std::size_t>(iy)) * d3 +
                                        static_cast<std::size_t>(iz)) * cin;
              const std::size_t koff = ((kx * k.y + ky) * k.z + kz) * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const float xval = xd[xoff + ci];
                const float* kc = kd + koff + ci * cout;
                float* dkc = dkd + koff + ci * cout;
                float acc = 0.0f;
                for (std::size_t o = 0; o < cout; ++o) {
                  acc += kc[o] * dyv[o];
                  dkc[o] += xval * dyv[o];
                }
                dxd[xoff + ci] += acc;
              }
            }
          }
        }
      }
    }
  }
  return g;
}

// --- MaxPool3D ---------------------------------------------------------------

Shape MaxPool3DLayer::output_shape(const Shape& input) const {
  if (input.rank() != 4) throw ShapeError("maxpool3d expects [d1,d2,d3,c], got " + input.to_string());
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] < 1 || stride[a] < 1) throw ShapeError("maxpool3d window and stride must be >= 1");
  }
  std::vector<std::size_t> out(4);
  for (std::size_t a = 0; a < 3; ++a) {
    out[a] = pool_output_extent(input[a], window[a], stride[a]);
  }
  out[3] = input[3];
  return Shape(out);
}

Forward<MaxPool3DCache> maxpool3d_forward(const MaxPool3DLayer& layer, const Tensor& x) {
  require_volume(x, "maxpool3d");
  const Shape out_shape = layer.output_shape(x.shape());
  const std::size_t d2 = x.shape()[1], d3 = x.shape()[2], c = x.shape()[3];
  const std::size_t o1 = out_shape[0], o2 = out_shape[1], o3 = out_shape[2];
  Tensor y(out_shape);
  MaxPool3DCache cache{x.shape(), std::vector<std::size_t>(out_shape.numel())};
  for (std::size_t ox = 0; ox < o1; ++ox)
    for (std::size_t oy = 0; oy < o2; ++oy)
      for (std::size_t oz = 0; oz < o3; ++oz)
        for (std::size_t ch = 0; ch < c; ++ch) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_idx = 0;
          bool first = true;
          // Row-major window scan visits flat indices in increasing order, so
          // strict comparison keeps the lowest-index tie winner.
          for (std::size_t wx = 0; wx < layer.window.x; ++wx)
            for (std::size_t wy = 0; wy < layer.window.y; ++wy)
              for (std::size_t wz = 0; wz < layer.window.z; ++wz) {
                const std::size_t ix = ox * layer.stride.x + wx;
                const std::size_t iy = oy * layer.stride.y + wy;
                const std::size_t iz = oz * layer.stride.z + wz;
                const std::size_t idx = ((ix * d2 + iy) * d3 + iz) * c + ch;
                if (first || x[idx] > best) {
                  best = x[idx];
                  best_idx = idx;
                  first = false;
                }
              }
          const std::size_t out_idx = ((ox * o2 + oy) * o3 + oz) * c + ch;
          y[out_idx] = best;
          cache.argmax[out_idx] = best_idx;
        }
  return {std::move(y), std::move(cache)};
}

Tensor maxpool3d_backward(const MaxPool3DLayer& layer, const MaxPool3DCache& cache, const Tensor& dy) {
  const Shape out_shape = layer.output_shape(cache.input_shape);
  if (!(dy.shape() == out_shape) || cache.argmax.size() != dy.size()) {
    throw ShapeError("maxpool3d_backward: gradient shape " + dy.shape().to_string() + " != output shape " +
                     out_shape.to_string());
  }
  Tensor dx(cache.input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.argmax[i]] += dy[i];
  return dx;
}

// --- Dense -------------------------------------------------------------------

DenseLayer DenseLayer::zeros(std::size_t n_in, std::size_t n_out) {
  return {Tensor(Shape{n_in, n_out}), Tensor(Shape{n_out})};
}

DenseLayer DenseLayer::glorot(std::size_t n_in, std::size_t n_out, Rng& rng) {
  return {glorot_uniform(Shape{n_in, n_out}, n_in, n_out, rng), Tensor(Shape{n_out})};
}

Forward<DenseCache> dense_forward(const DenseLayer& layer, const Tensor& x) {
  if (layer.weights.rank() != 2 || layer.bias.rank() != 1 || layer.bias.size() != layer.n_out()) {
    throw ShapeError("dense layer weight/bias extents inconsistent");
  }
  if (x.rank() != 1 || x.size() != layer.n_in()) {
    throw ShapeError("dense expects input [" + std::to_string(layer.n_in()) + "], got " + x.shape().to_string());
  }
  const std::size_t n_in = layer.n_in(), n_out = layer.n_out();
  Tensor y = layer.bias;
  float* yd = y.data();
  const float* w = layer.weights.data();
  for (std::size_t i = 0; i < n_in; ++i) {
    const float xi = x[i];
    if (xi == 0.0f) continue;
    const float* wi = w + i * n_out;
    for (std::size_t j = 0; j < n_out; ++j) yd[j] += xi * wi[j];
  }
  check_finite(y, "dense_forward");
  return {std::move(y), {x}};
}

DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache, const Tensor& dy) {
  const std::size_t n_in = layer.n_in(), n_out = layer.n_out();
  if (dy.rank() != 1 || dy.size() != n_out || cache.input.size() != n_in) {
    throw ShapeError("dense_backward: gradient " + dy.shape().to_string() + " does not match layer [" +
                     std::to_string(n_in) + "x" + std::to_string(n_out) + "]");
  }
  DenseGrads g{Tensor(Shape{n_in}), Tensor(layer.weights.shape()), dy};
  const float* w = layer.weights.data();
  float* dw = g.dweights.data();
  for (std::size_t i = 0; i < n_in; ++i) {
    const float xi = cache.input[i];
    const float* wi = w + i * n_out;
    float* dwi = dw + i * n_out;
    float acc = 0.0f;
    for (std::size_t j = 0; j < n_out; ++j) {
      acc += wi[j] * dy[j];
      dwi[j] = xi * dy[j];
    }
    g.dx[i] = acc;
  }
  return g;
}

// --- Activations -------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& input, const Tensor& dy) {
  if (!(input.shape() == dy.shape())) throw ShapeError("relu_backward: shape mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = input[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.size() < 2) {
    throw ShapeError("softmax expects a rank-1 tensor with >= 2 entries, got " + logits.shape().to_string());
  }
  const float peak = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor p(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - peak);
    p[i] = static_cast<float>(e);
    total += e;
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(p[i] / total);
  return p;
}

Tensor softmax_backward(const Tensor& probabilities, const Tensor& dy) {
  if (!(probabilities.shape() == dy.shape())) throw ShapeError("softmax_backward: shape mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) dot += static_cast<double>(dy[i]) * probabilities[i];
  Tensor dl(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    dl[i] = static_cast<float>(probabilities[i] * (dy[i] - dot));
  }
  return dl;
}

Tensor softmax_ce_logit_gradient(const Tensor& probabilities, std::size_t label) {
  if (label >= probabilities.size()) {
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probabilities.size()) + " classes");
  }
  Tensor g = probabilities;
  g[label] -= 1.0f;
  return g;
}

// --- Dropout -----------------------------------------------------------------

Forward<DropoutCache> dropout_forward(const DropoutLayer& layer, const Tensor& x, bool training,
                                      std::uint64_t stream) {
  if (!(layer.rate >= 0.0f && layer.rate < 1.0f)) throw ConfigError("dropout rate must be in [0, 1)");
  Tensor mask(x.shape(), 1.0f);
  if (training && layer.rate > 0.0f) {
    Rng rng(derive_seed({layer.rng_seed, stream}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const float keep_scale = 1.0f / (1.0f - layer.rate);
    for (float& m : mask.values()) m = u(rng) < layer.rate ? 0.0f : keep_scale;
  }
  Tensor y = mul(x, mask);
  return {std::move(y), {std::move(mask)}};
}

Tensor dropout_backward(const DropoutCache& cache, const Tensor& dy) { return mul(dy, cache.mask); }

// --- ConvBlock ---------------------------------------------------------------

namespace {

constexpr Extent3 kFirstStride{2, 2, 2};
constexpr Extent3 kSecondStride{1, 1, 1};

MaxPool3DLayer pool_for(const Shape& input) {
  MaxPool3DLayer pool;
  pool.window = {input[0] >= 2 ? 2u : 1u, input[1] >= 2 ? 2u : 1u, input[2] >= 2 ? 2u : 1u};
  pool.stride = pool.window;
  return pool;
}

Shape conv_plan(const Shape& in, Extent3 kernel, Extent3 stride, std::size_t filters) {
  return Shape{conv_output_extent(in[0], kernel.x, stride.x, Padding::kSame),
               conv_output_extent(in[1], kernel.y, stride.y, Padding::kSame),
               conv_output_extent(in[2], kernel.z, stride.z, Padding::kSame), filters};
}

}  // namespace

std::array<Shape, 4> ConvBlock::plan(const Shape& input, Extent3 kernel, std::size_t filters) {
  if (input.rank() != 4) throw ShapeError("conv block expects [d1,d2,d3,c], got " + input.to_string());
  const Shape s1 = conv_plan(input, kernel, kFirstStride, filters);
  const Shape s2 = pool_for(s1).output_shape(s1);
  const Shape s3 = conv_plan(s2, kernel, kSecondStride, filters);
  const Shape s4 = pool_for(s3).output_shape(s3);
  return {s1, s2, s3, s4};
}

ConvBlock ConvBlock::create(const Shape& input, Extent3 kernel, std::size_t filters, Rng& rng) {
  const auto stages = plan(input, kernel, filters);
  ConvBlock block;
  block.conv1 = Conv3DLayer::glorot(kernel, input[3], filters, kFirstStride, Padding::kSame, rng);
  block.pool1 = pool_for(stages[0]);
  block.conv2 = Conv3DLayer::glorot(kernel, filters, filters, kSecondStride, Padding::kSame, rng);
  block.pool2 = pool_for(stages[2]);
  return block;
}

std::array<Shape, 4> ConvBlock::stage_shapes(const Shape& input) const {
  const Shape s1 = conv1.output_shape(input);
  const Shape s2 = pool1.output_shape(s1);
  const Shape s3 = conv2.output_shape(s2);
  const Shape s4 = pool2.output_shape(s3);
  return {s1, s2, s3, s4};
}

std::size_t ConvBlock::output_width(const Shape& input) const { return stage_shapes(input)[3].numel(); }

Forward<ConvBlock::Cache> ConvBlock::forward(const Tensor& x) const {
  Cache cache;
  auto c1 = conv3d_forward(conv1, x);
  Tensor h1 = relu_forward(c1.y);
  auto p1 = maxpool3d_forward(pool1, h1);
  auto c2 = conv3d_forward(conv2, p1.y);
  Tensor h2 = relu_forward(c2.y);
  auto p2 = maxpool3d_forward(pool2, h2);
  cache.conv1 = std::move(c1.cache);
  cache.pre1 = std::move(c1.y);
  cache.pool1 = std::move(p1.cache);
  cache.conv2 = std::move(c2.cache);
  cache.pre2 = std::move(c2.y);
  cache.pool2 = std::move(p2.cache);
  return {flatten(p2.y), std::move(cache)};
}

std::pair<Tensor, ConvBlock::Grads> ConvBlock::backward(const Cache& cache, const Tensor& dflat) const {
  const Shape pooled = pool2.output_shape(cache.pre2.shape());
  Tensor d = maxpool3d_backward(pool2, cache.pool2, reshape(dflat, pooled));
  d = relu_backward(cache.pre2, d);
  Conv3DGrads g2 = conv3d_backward(conv2, cache.conv2, d);
  d = maxpool3d_backward(pool1, cache.pool1, g2.dx);
  d = relu_backward(cache.pre1, d);
  Conv3DGrads g1 = conv3d_backward(conv1, cache.conv1, d);
  Grads grads{std::move(g1.dkernels), std::move(g1.dbias), std::move(g2.dkernels), std::move(g2.dbias)};
  return {std::move(g1.dx), std::move(grads)};
}

void ConvBlock::Grads::add(const Grads& other) {
  dkernels1 = nf::add(dkernels1, other.dkernels1);
  dbias1 = nf::add(dbias1, other.dbias1);
  dkernels2 = nf::add(dkernels2, other.dkernels2);
  dbias2 = nf::add(dbias2, other.dbias2);
}

std::vector<Tensor> ConvBlock::Grads::release() && {
  std::vector<Tensor> out;
  out.push_back(std::move(dkernels1));
  out.push_back(std::move(dbias1));
  out.push_back(std::move(dkernels2));
  out.push_back(std::move(dbias2));
  return out;
}

std::vector<Tensor*> ConvBlock::parameters() {
  return {&conv1.kernels, &conv1.bias, &conv2.kernels, &conv2.bias};
}

std::vector<const Tensor*> ConvBlock::parameters() const {
  return {&conv1.kernels, &conv1.bias, &conv2.kernels, &conv2.bias};
}

}  // namespace nf
