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

#include "neurofuse/tensor_io.hpp"

#include <bit>
#include <cstring>

namespace nf {

namespace io {

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[8] = {};
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw FormatError("'" + path + "' does not start with " + std::string(magic, 8));
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

}  // namespace io

void write_tensor_record(std::ostream& out, const Tensor& t) {
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape().dims()) io::put_le<std::uint64_t>(out, d);
  for (float v : t.values()) io::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

Tensor read_tensor_record(std::istream& in) {
  const auto rank = io::get_le<std::uint32_t>(in);
  if (rank < 1 || rank > Shape::kMaxRank) throw FormatError("tensor record has invalid rank " + std::to_string(rank));
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) {
    d = static_cast<std::size_t>(io::get_le<std::uint64_t>(in));
    if (d == 0 || d > (std::size_t{1} << 40)) throw FormatError("tensor record has invalid extent");
  }
  Shape shape(std::move(dims));
  std::vector<float> values(shape.numel());
  for (float& v : values) v = std::bit_cast<float>(io::get_le<std::uint32_t>(in));
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor_file(const Tensor& t, const std::string& path) {
  std::ofstream out = io::open_out(path);
  out.write(kTensorFileMagic, 8);
  write_tensor_record(out, t);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Tensor load_tensor_file(const std::string& path) {
  std::ifstream in = io::open_in(path);
  io::expect_magic(in, kTensorFileMagic, path);
  return read_tensor_record(in);
}

}  // namespace nf
