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

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "neurofuse/errors.hpp"

namespace nf {

// Ordered list of extents, rank 1..6, every extent >= 1.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 6;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const { return numel_; }

  // Shape without its leading axis, e.g. [T,d1,d2,d3,1] -> [d1,d2,d3,1].
  Shape drop_leading() const;
  // Shape with `extent` prepended.
  Shape prepend(std::size_t extent) const;

  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims_ == b.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

// Parses "16x16x12" or "16,16,12" into extents; throws ConfigError.
std::vector<std::size_t> parse_extents(const std::string& text);

// Dense row-major tensor of 32-bit reals. Operations return new tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.rank(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Flat row-major offset of a coordinate; throws ShapeError on bad input.
  std::size_t offset(std::span<const std::size_t> index) const;
  float& at(std::initializer_list<std::size_t> index);
  float at(std::initializer_list<std::size_t> index) const;

  // Copy of the sub-tensor at position i of the leading axis.
  Tensor slice_leading(std::size_t i) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor tensor_new(const Shape& shape, float fill);

enum class ElementwiseOp { kAdd, kSub, kMul };

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& t, const Shape& new_shape);
Tensor flatten(const Tensor& t);

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// Concatenates rank-1 tensors.
Tensor concat(std::span<const Tensor> parts);

float sum(const Tensor& t);
double squared_norm(const Tensor& t);
bool all_finite(const Tensor& t);

// Throws NonFiniteError when validation is compiled in and `t` holds NaN/Inf.
void check_finite(const Tensor& t, const char* where);

}  // namespace nf
