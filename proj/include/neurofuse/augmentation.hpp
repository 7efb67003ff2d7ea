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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurofuse/random.hpp"
#include "neurofuse/sample.hpp"
#include "neurofuse/tensor.hpp"

namespace nf {

// Ranges for every random transform. All magnitudes are policy values.
struct AugmentationPolicy {
  std::optional<Shape> target_mri_shape = Shape{128, 128, 176};  // spatial extents; nullopt keeps the source grid
  std::array<double, 3> rotation_max_degrees{10.0, 10.0, 10.0};
  std::array<int, 3> shift_max_voxels{8, 8, 8};
  double intensity_low = 0.9;
  double intensity_high = 1.1;
  double noise_sigma = 0.02;
  int temporal_shift_max_frames = 3;
  double motion_artifact_probability = 0.2;
  int motion_shift_max_voxels = 2;
  std::size_t copies_per_subject = 10;
  std::uint64_t seed = 0;

  void validate() const;

  // Every magnitude zero, no resizing, no copies.
  static AugmentationPolicy identity();
};

// Trilinear resampling of x [d1,d2,d3,c] onto `target` spatial extents
// (rank 3, or rank 4 with matching channels). Corners map to corners.
Tensor resize_volume(const Tensor& x, const Shape& target);

// Rotation about the volume center by angles (degrees) about axes 0, 1, 2,
// composed as R = R2 · R1 · R0. Trilinear resampling, zero outside.
Tensor rotate_volume(const Tensor& x, const std::array<double, 3>& degrees);
// Content moves by +offset voxels per axis; vacated voxels are zero.
Tensor shift_volume(const Tensor& x, const std::array<int, 3>& offset);
Tensor scale_intensity(const Tensor& x, double factor);
Tensor add_noise(const Tensor& x, double sigma, Rng& rng);
// Output frame t is input frame (t - k) mod T.
Tensor temporal_shift(const Tensor& x, long long k);

std::array<double, 3> sample_rotation(const AugmentationPolicy& policy, Rng& rng);
std::array<int, 3> sample_shift(const AugmentationPolicy& policy, Rng& rng);
double sample_intensity_scale(const AugmentationPolicy& policy, Rng& rng);

Tensor random_rotate_3d(const Tensor& x, const AugmentationPolicy& policy, Rng& rng);
Tensor random_shift_3d(const Tensor& x, const AugmentationPolicy& policy, Rng& rng);
Tensor random_intensity_scale(const Tensor& x, const AugmentationPolicy& policy, Rng& rng);
Tensor add_gaussian_noise(const Tensor& x, const AugmentationPolicy& policy, Rng& rng);

struct MriTransform {
  std::array<double, 3> rotation_degrees{};
  std::array<int, 3> shift{};
  double intensity_scale = 1.0;
  double noise_sigma = 0.0;
};

struct FmriTransform {
  std::array<double, 3> rotation_degrees{};
  std::array<int, 3> shift{};
  long long temporal_shift = 0;
  std::optional<std::size_t> motion_frame;
  std::array<int, 3> motion_offset{};
};

// rotate -> shift -> scale -> noise on an already resized volume.
Tensor augment_mri(const Tensor& x, const AugmentationPolicy& policy, Rng& rng, MriTransform* record = nullptr);

// Shared spatial transform on all frames, circular temporal shift, optional
// motion spike on one frame. x is [T, d1, d2, d3, 1].
Tensor augment_fmri(const Tensor& x, const AugmentationPolicy& policy, Rng& rng, FmriTransform* record = nullptr);

struct ProvenanceRecord {
  std::string sample_id;
  std::string source_subject;
  std::size_t copy_index = 0;  // 0 = original
  int label = 0;
  std::string transform_params;
};

struct AugmentedDataset {
  std::vector<Sample> samples;
  std::vector<ProvenanceRecord> provenance;
};

// Emits, per subject, the (resized) original followed by copies_per_subject
// augmented copies. Copy c of subject s uses streams seeded by (seed, s, c),
// so output does not depend on `workers`.
AugmentedDataset expand_dataset(std::span<const Sample> subjects, const AugmentationPolicy& policy, int workers = 1);

// One tab-separated line per sample: id, source, copy, label, params.
std::string format_provenance(std::span<const ProvenanceRecord> records);
void write_provenance(std::span<const ProvenanceRecord> records, const std::string& path);
std::vector<ProvenanceRecord> read_provenance(const std::string& path);

}  // namespace nf
