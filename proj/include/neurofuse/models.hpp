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
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "neurofuse/layers.hpp"
#include "neurofuse/recurrent.hpp"
#include "neurofuse/sample.hpp"
#include "neurofuse/tensor.hpp"

namespace nf {

enum class Architecture {
  kMultimodalCnnLstm,  // mm-3dcnn-lstm
  kMultimodalCnnGru,   // mm-3dcnn-gru
  kLstm3D,             // 3dlstm
  kGru3D,              // 3dgru
  kCnn3D,              // 3dcnn
  kCnn2D,              // 2dcnn
};

std::string architecture_name(Architecture arch);
Architecture parse_architecture(const std::string& name);
bool uses_mri(Architecture arch);
bool uses_fmri(Architecture arch);

// Fixed widths of the layer stack.
inline constexpr std::size_t kConvFilters = 32;
inline constexpr std::size_t kMriFeatures = 128;
inline constexpr std::size_t kRecurrentUnits = 32;
inline constexpr std::size_t kRecurrentDepth = 3;
inline constexpr std::size_t kFusionHidden = 64;

struct ModelConfig {
  Architecture architecture = Architecture::kMultimodalCnnLstm;
  std::optional<Shape> mri_shape;   // [d1, d2, d3, 1]
  std::optional<Shape> fmri_shape;  // [T, d1, d2, d3, 1]
  std::size_t num_classes = 3;
  float dropout_rate = 0.1f;
  std::uint64_t seed = 0;

  // Throws ConfigError on any cross-field violation.
  void validate() const;

  // Flat `key = value` lines; parse() is the inverse.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
};

// Layer-by-layer output shapes derived from extents alone. Used to audit
// full-size configurations without allocating activations or weights.
struct ArchitecturePlan {
  struct Stage {
    std::string name;
    Shape output;
  };
  std::vector<Stage> mri_stages;
  std::vector<Stage> fmri_stages;
  std::vector<Stage> head_stages;
  std::size_t mri_features = 0;      // 0 when the MRI branch is absent
  std::size_t fmri_frame_width = 0;  // N, per-frame encoder output
  std::size_t fmri_features = 0;     // 0 when the fMRI branch is absent
  std::size_t fusion_input = 0;
  std::size_t num_classes = 0;
  std::size_t parameter_count = 0;
};

ArchitecturePlan plan_architecture(const ModelConfig& config);

using RecurrentLayer = std::variant<LSTMLayer, GRULayer>;
using FrameEncoderLayer = std::variant<ConvBlock, FlattenEncoder>;

struct MriBranch {
  ConvBlock cnn;
  DenseLayer project;  // linear, produces v_MRI
};

struct FmriBranch {
  FrameEncoderLayer encoder;            // shared across frames
  std::vector<RecurrentLayer> stack;    // seq, seq, last
};

struct FusionHead {
  DenseLayer hidden;      // -> 64, ReLU
  DropoutLayer dropout;
  DenseLayer classifier;  // -> C, softmax
};

struct Model {
  ModelConfig config;
  std::optional<MriBranch> mri;
  std::optional<FmriBranch> fmri;
  FusionHead head;

  // Every trainable tensor in declaration order: MRI branch, fMRI branch,
  // fusion head. Gradients use the same order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
};

Model build_model(const ModelConfig& config);

struct Prediction {
  Tensor probabilities;  // [C]
  std::size_t predicted_class = 0;
};

using FmriEncoderCache = std::variant<TimeDistributedCache<ConvBlock>, TimeDistributedCache<FlattenEncoder>>;
using RecurrentCache = std::variant<LSTMCache, GRUCache>;

struct ModelCache {
  std::optional<ConvBlock::Cache> mri_cnn;
  std::optional<DenseCache> mri_project;
  std::optional<FmriEncoderCache> fmri_encoder;
  std::vector<RecurrentCache> fmri_stack;
  Tensor v_mri;
  Tensor v_fmri;
  DenseCache hidden;
  Tensor hidden_pre;  // dense64 pre-activation
  DropoutCache dropout;
  DenseCache classifier;
  Tensor logits;
  Tensor probabilities;
};

struct ModelForward {
  Prediction prediction;
  ModelCache cache;
};

using Gradients = std::vector<Tensor>;

// `dropout_stream` selects the dropout mask in training mode.
ModelForward model_forward(const Model& model, const Sample& sample, bool training,
                           std::uint64_t dropout_stream = 0);

// Gradient of the sparse categorical cross-entropy with respect to every
// parameter, aligned with Model::parameters().
Gradients model_backward(const Model& model, const ModelCache& cache, int label);

// Same, starting from an externally supplied gradient at the logits.
Gradients model_backward_from_logits(const Model& model, const ModelCache& cache, const Tensor& dlogits);

// --- Serialization ---------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "NFSE0001";

// Magic, u64 length + config text, then every parameter as a tensor record
// in declaration order.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace nf
