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

#include <optional>
#include <string>

#include "neurofuse/tensor.hpp"

namespace nf {

// One subject: structural volume [d1,d2,d3,1], functional series
// [T,d1',d2',d3',1], and an integer class label.
struct Sample {
  std::string subject_id;
  std::optional<Tensor> mri;
  std::optional<Tensor> fmri;
  int label = 0;
};

}  // namespace nf
