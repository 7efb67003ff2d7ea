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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurofuse/models.hpp"
#include "neurofuse/sample.hpp"
#include "neurofuse/tensor.hpp"

namespace nf {

struct AdamState {
  float learning_rate = 1e-5f;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // first moments, lazily shaped like the parameters
  std::vector<Tensor> v;  // second moments
};

// One bias-corrected Adam update, in place on `params`.
void adam_update(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads);

inline constexpr double kLogFloor = 1e-12;

// -log(max(p[label], 1e-12)).
double sparse_ce_loss(const Tensor& probabilities, int label);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + val + test; }
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Largest-remainder apportionment of n items to three fractions.
SplitSizes sizes_from_fractions(std::size_t n, double train, double val, double test);

// Per-class stratified partition of sample indices. Each class's count in
// each split is within one of its proportional share. Indices in each list
// are ascending; deterministic for a fixed seed.
Split stratified_split(std::span<const int> labels, SplitSizes sizes, std::uint64_t seed);

// Same, but whole groups (source subjects) move together so no group spans
// two splits. `fractions` are applied to the number of groups.
Split grouped_stratified_split(std::span<const int> labels, std::span<const std::string> groups,
                               double train_fraction, double val_fraction, double test_fraction,
                               std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 2;
  float learning_rate = 1e-5f;
  std::optional<double> gradient_clip_norm;  // global-norm clip, off by default
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

using LearningCurve = std::vector<EpochRecord>;

struct TrainResult {
  LearningCurve curve;
  AdamState optimizer;
};

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference-mode mean loss and accuracy. NaN for an empty set.
LossAccuracy evaluate_loss_accuracy(const Model& model, std::span<const Sample> samples, int workers = 1);

// Clips the gradient list to `max_norm` in global L2 norm; returns the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam with per-sample gradient accumulation in fixed sample order,
// so results do not depend on the worker count. Train/val metrics are taken
// in inference mode after each epoch.
TrainResult train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// `epoch,train_loss,train_acc,val_loss,val_acc`, 6 significant digits.
std::string format_learning_curve(const LearningCurve& curve);
void write_learning_curve(const LearningCurve& curve, const std::string& path);

}  // namespace nf
