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
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurofuse/sample.hpp"
#include "neurofuse/tensor.hpp"

namespace nf {

// --- NIfTI-1 -------------------------------------------------------------------

inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr float kNiftiSingleFileOffset = 352.0f;

enum NiftiDatatype : std::int16_t {
  kNiftiUint8 = 2,
  kNiftiInt16 = 4,
  kNiftiFloat32 = 16,
  kNiftiFloat64 = 64,
};

struct NiftiHeader {
  std::int32_t sizeof_hdr = static_cast<std::int32_t>(kNiftiHeaderSize);
  std::array<std::int16_t, 8> dim{};
  std::int16_t intent_code = 0;
  std::int16_t datatype = kNiftiFloat32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = kNiftiSingleFileOffset;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::uint8_t xyzt_units = 0;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::string descrip;
  std::array<char, 4> magic{'n', '+', '1', '\0'};

  bool single_file() const { return magic[1] == '+'; }
  std::size_t voxel_count() const;
  friend bool operator==(const NiftiHeader&, const NiftiHeader&) = default;
};

// Byte order is detected from sizeof_hdr; throws FormatError if neither fits.
std::endian detect_nifti_byte_order(std::span<const unsigned char> bytes);
NiftiHeader parse_nifti_header(std::span<const unsigned char> bytes);
std::array<unsigned char, kNiftiHeaderSize> encode_nifti_header(const NiftiHeader& header,
                                                                std::endian order = std::endian::little);

// Rank-3 files load as [d1,d2,d3,1]; rank-4 files (time last on disk) load as
// [T,d1,d2,d3,1]. A ".hdr" path reads voxels from the sibling ".img".
Tensor read_nifti(const std::string& path);
NiftiHeader read_nifti_header(const std::string& path);

// Accepts [d1,...,1] with 1-3 spatial axes or [T,d1,d2,d3,1].
void write_nifti(const Tensor& t, const std::string& path);

// --- Preprocessing -------------------------------------------------------------

inline constexpr double kStandardizeEpsilon = 1e-8;

// z-score over the whole volume; series ([T,d1,d2,d3,1]) are normalized per frame.
Tensor standardize_intensity(const Tensor& x);

// --- Labels --------------------------------------------------------------------

enum class LabelSet { kCognitive, kImpairment };

// NCS/MCI/AD -> 0/1/2. "no/very mild/mild/moderate impairment" -> 0..3.
// Matching ignores case, spaces, '_' and '-'.
int encode_label(const std::string& text);
int encode_label(const std::string& text, LabelSet set);
LabelSet label_set_of(const std::string& text);
std::string decode_label(int label, LabelSet set);
int label_set_size(LabelSet set);

// --- Volumes and manifests -----------------------------------------------------

// Dispatches on extension: .nii / .hdr (NIfTI-1), .nft (tensor file).
Tensor read_volume(const std::string& path);

struct ManifestRow {
  std::string subject_id;
  std::string mri_path;   // empty when absent
  std::string fmri_path;  // empty when absent
  std::string label_text;
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  // Set by "# preprocessed: standardized"; loaders then skip standardization.
  bool standardized = false;
};

inline constexpr char kStandardizedMarker[] = "# preprocessed: standardized";

Manifest parse_manifest(const std::string& text);
std::string format_manifest(const Manifest& manifest);
Manifest read_manifest(const std::string& path);
void write_manifest(const Manifest& manifest, const std::string& path);

struct LoadOptions {
  bool need_mri = true;
  bool need_fmri = true;
  int workers = 1;
};

// Relative paths resolve against base_dir. Missing files raise IoError, an
// absent modality that is needed raises ConfigError, and the label texts must
// all come from one label set.
std::vector<Sample> load_dataset(const Manifest& manifest, const std::string& base_dir, const LoadOptions& options);

// --- Synthetic data ------------------------------------------------------------

struct SyntheticShapes {
  std::vector<std::size_t> mri{16, 16, 12};
  std::optional<std::vector<std::size_t>> fmri = std::vector<std::size_t>{6, 8, 8, 4};  // [T,d1,d2,d3]
};

// Class-major emission: n_per_class samples of class 0, then class 1, ...
std::vector<Sample> generate_synthetic_dataset(std::size_t n_per_class, const SyntheticShapes& shapes,
                                               std::uint64_t seed, int num_classes = 3);

}  // namespace nf
