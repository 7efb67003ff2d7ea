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
#include <fstream>
#include <iosfwd>
#include <string>
#include <type_traits>

#include "neurofuse/tensor.hpp"

namespace nf {

inline constexpr char kTensorFileMagic[] = "NFST0001";

// (rank: u32, extents: u64 each, values: f32), all little-endian.
void write_tensor_record(std::ostream& out, const Tensor& t);
Tensor read_tensor_record(std::istream& in);

// Standalone tensor file: 8-byte magic followed by one tensor record.
void save_tensor_file(const Tensor& t, const std::string& path);
Tensor load_tensor_file(const std::string& path);

namespace io {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw LengthError("unexpected end of data");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void expect_magic(std::istream& in, const char* magic, const std::string& path);
std::ifstream open_in(const std::string& path);
std::ofstream open_out(const std::string& path);

}  // namespace io

}  // namespace nf
