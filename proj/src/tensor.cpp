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

#include "neurofuse/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace nf {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > Shape::kMaxRank) {
    throw ShapeError("shape rank must be in 1.." + std::to_string(Shape::kMaxRank) + ", got " +
                     std::to_string(dims.size()));
  }
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape extent must be >= 1");
    if (n > std::numeric_limits<std::size_t>::max() / d) throw ShapeError("shape element count overflows");
    n *= d;
  }
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)), numel_(checked_numel(dims_)) {}

Shape Shape::drop_leading() const {
  if (rank() < 2) throw ShapeError("cannot drop the leading axis of " + to_string());
  return Shape(std::vector<std::size_t>(dims_.begin() + 1, dims_.end()));
}

Shape Shape::prepend(std::size_t extent) const {
  std::vector<std::size_t> d;
  d.reserve(dims_.size() + 1);
  d.push_back(extent);
  d.insert(d.end(), dims_.begin(), dims_.end());
  return Shape(std::move(d));
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

std::vector<std::size_t> parse_extents(const std::string& text) {
  std::vector<std::size_t> out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) throw ConfigError("malformed extent list '" + text + "'");
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(token, &pos);
    } catch (const std::exception&) {
      throw ConfigError("malformed extent list '" + text + "'");
    }
    if (pos != token.size() || v < 1) throw ConfigError("malformed extent list '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
    token.clear();
  };
  for (char ch : text) {
    if (ch == 'x' || ch == 'X' || ch == ',') {
      flush();
    } else if (ch != ' ') {
      token.push_back(ch);
    }
  }
  flush();
  return out;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {
  if (shape_.rank() == 0) throw ShapeError("tensor requires a non-empty shape");
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.rank() == 0) throw ShapeError("tensor requires a non-empty shape");
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.to_string());
  }
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.rank()) throw ShapeError("index rank mismatch for " + shape_.to_string());
  std::size_t off = 0;
  for (std::size_t a = 0; a < index.size(); ++a) {
    if (index[a] >= shape_[a]) throw ShapeError("index out of range for " + shape_.to_string());
    off = off * shape_[a] + index[a];
  }
  return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

Tensor Tensor::slice_leading(std::size_t i) const {
  Shape inner = shape_.drop_leading();
  if (i >= shape_[0]) throw ShapeError("leading index out of range for " + shape_.to_string());
  const std::size_t n = inner.numel();
  return Tensor(inner, std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                          data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

Tensor tensor_new(const Shape& shape, float fill) { return Tensor(shape, fill); }

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise");
  Tensor c(a.shape());
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
      break;
  }
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kMul, a, b); }

Tensor scale(const Tensor& a, float s) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
  return c;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul requires rank-2 operands");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul inner extent mismatch " + a.shape().to_string() + " x " + b.shape().to_string());
  }
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    float* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = a[i * k + p];
      const float* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

Tensor reshape(const Tensor& t, const Shape& new_shape) {
  if (new_shape.numel() != t.size()) {
    throw ShapeError("reshape " + t.shape().to_string() + " -> " + new_shape.to_string() +
                     " changes element count");
  }
  return Tensor(new_shape, std::vector<float>(t.values().begin(), t.values().end()));
}

Tensor flatten(const Tensor& t) { return reshape(t, Shape{t.size()}); }

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack requires at least one tensor");
  const Shape& inner = parts.front().shape();
  std::vector<float> data;
  data.reserve(inner.numel() * parts.size());
  for (const Tensor& p : parts) {
    if (!(p.shape() == inner)) throw ShapeError("stack: mismatched part shape " + p.shape().to_string());
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  return Tensor(inner.prepend(parts.size()), std::move(data));
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<float> data;
  for (const Tensor& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat requires rank-1 tensors");
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  if (data.empty()) throw ShapeError("concat of nothing");
  const std::size_t n = data.size();
  return Tensor(Shape{n}, std::move(data));
}

float sum(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += v;
  return static_cast<float>(s);
}

double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += static_cast<double>(v) * v;
  return s;
}

bool all_finite(const Tensor& t) {
  for (float v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* where) {
#if defined(NEUROFUSE_VALIDATE) || !defined(NDEBUG)
  if (!all_finite(t)) throw NonFiniteError(std::string("non-finite value in ") + where);
#endif
}

}  // namespace nf
