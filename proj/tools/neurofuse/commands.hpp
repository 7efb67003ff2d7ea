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
#include <optional>
#include <string>

#include "neurofuse/augmentation.hpp"
#include "neurofuse/models.hpp"
#include "neurofuse/training.hpp"

namespace nf::cli {

struct SynthOptions {
  std::size_t per_class = 10;
  int num_classes = 3;
  std::string mri_shape = "16x16x12";
  std::string fmri_shape = "6x8x8x4";  // "none" drops the modality
  std::uint64_t seed = 0;
  std::string out;
};

struct AugmentOptions {
  std::string manifest;
  std::string out;
  std::string target_shape = "128x128x176";  // "keep" skips resizing
  AugmentationPolicy policy;
  int workers = 1;
};

struct TrainOptions {
  std::string manifest;
  std::string out;
  std::string architecture = "mm-3dcnn-lstm";
  float dropout = 0.1f;
  TrainConfig train;
  double train_fraction = 0.7;
  double val_fraction = 0.2;
  double test_fraction = 0.1;
  bool split_before_augment = true;
  std::string provenance;  // default: provenance.tsv beside the manifest
};

struct EvalOptions {
  std::string checkpoint;
  std::string manifest;
  std::string split;  // default: split.tsv beside the checkpoint
  std::string subset = "test";
  std::string out;
  int workers = 1;
  std::uint64_t seed = 0;  // accepted for a uniform flag set; evaluation draws no randomness
};

// Each command validates its options up front (ConfigError) and writes only
// under `out`.
void run_synth(const SynthOptions& options);
void run_augment(const AugmentOptions& options);
void run_train(const TrainOptions& options);
void run_eval(const EvalOptions& options);

}  // namespace nf::cli
