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

#include "neurofuse/augmentation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "neurofuse/parallel.hpp"

namespace nf {

namespace {

void require_volume(const Tensor& x, const char* who) {
  if (x.rank() != 4) throw ShapeError(std::string(who) + " expects [d1,d2,d3,c], got " + x.shape().to_string());
}

void require_series(const Tensor& x, const char* who) {
  if (x.empty()) throw EmptySequenceError(std::string(who) + ": empty sequence");
  if (x.rank() != 5) throw ShapeError(std::string(who) + " expects [T,d1,d2,d3,c], got " + x.shape().to_string());
}

// Trilinear sample of channel ch at continuous coordinate f; neighbours
// outside the grid contribute zero.
float sample_trilinear(const Tensor& x, std::size_t ch, const std::array<double, 3>& f) {
  const std::size_t d[3] = {x.shape()[0], x.shape()[1], x.shape()[2]};
  const std::size_t c = x.shape()[3];
  long long base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double fl = std::floor(f[a]);
    base[a] = static_cast<long long>(fl);
    frac[a] = f[a] - fl;
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    long long idx[3];
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const int bit = (corner >> (2 - a)) & 1;
      idx[a] = base[a] + bit;
      w *= bit ? frac[a] : 1.0 - frac[a];
      if (idx[a] < 0 || idx[a] >= static_cast<long long>(d[a])) inside = false;
    }
    if (!inside || w == 0.0) continue;
    const std::size_t off =
        ((static_cast<std::size_t>(idx[0]) * d[1] + static_cast<std::size_t>(idx[1])) * d[2] +
         static_cast<std::size_t>(idx[2])) * c + ch;
    acc += w * x[off];
  }
  return static_cast<float>(acc);
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Mat3 axis_rotation(int axis, double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  switch (axis) {
    case 0:
      return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
    case 1:
      return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    default:
      return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  }
}

std::string join3(const std::array<double, 3>& v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g", v[0], v[1], v[2]);
  return buf;
}

std::string join3(const std::array<int, 3>& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

std::string describe(const MriTransform& t) {
  char scale[64];
  std::snprintf(scale, sizeof scale, "%.6g;noise=%.6g", t.intensity_scale, t.noise_sigma);
  return "rot=" + join3(t.rotation_degrees) + ";shift=" + join3(t.shift) + ";scale=" + scale;
}

std::string describe(const FmriTransform& t) {
  std::string motion = "none";
  if (t.motion_frame) motion = std::to_string(*t.motion_frame) + "@" + join3(t.motion_offset);
  return "frot=" + join3(t.rotation_degrees) + ";fshift=" + join3(t.shift) +
         ";tshift=" + std::to_string(t.temporal_shift) + ";motion=" + motion;
}

}  // namespace

void AugmentationPolicy::validate() const {
  if (target_mri_shape && target_mri_shape->rank() != 3) {
    throw ConfigError("augmentation target shape must have 3 spatial extents");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(rotation_max_degrees[a] >= 0.0)) throw ConfigError("rotation range must be >= 0");
    if (shift_max_voxels[a] < 0) throw ConfigError("shift range must be >= 0");
  }
  if (!(intensity_low <= intensity_high)) throw ConfigError("intensity scale range must be ordered");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (temporal_shift_max_frames < 0 || motion_shift_max_voxels < 0) throw ConfigError("shift ranges must be >= 0");
  if (!(motion_artifact_probability >= 0.0 && motion_artifact_probability <= 1.0)) {
    throw ConfigError("motion artifact probability must be in [0, 1]");
  }
}

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.target_mri_shape.reset();
  p.rotation_max_degrees = {0, 0, 0};
  p.shift_max_voxels = {0, 0, 0};
  p.intensity_low = p.intensity_high = 1.0;
  p.noise_sigma = 0.0;
  p.temporal_shift_max_frames = 0;
  p.motion_artifact_probability = 0.0;
  p.motion_shift_max_voxels = 0;
  p.copies_per_subject = 0;
  return p;
}

Tensor resize_volume(const Tensor& x, const Shape& target) {
  require_volume(x, "resize_volume");
  if (target.rank() != 3 && !(target.rank() == 4 && target[3] == x.shape()[3])) {
    throw ShapeError("resize target " + target.to_string() + " does not match volume rank");
  }
  const Shape out_shape{target[0], target[1], target[2], x.shape()[3]};
  if (out_shape == x.shape()) return x;
  Tensor y(out_shape);
  std::array<double, 3> ratio{};
  for (int a = 0; a < 3; ++a) {
    ratio[a] = out_shape[a] > 1 ? static_cast<double>(x.shape()[a] - 1) / static_cast<double>(out_shape[a] - 1) : 0.0;
  }
  const std::size_t c = x.shape()[3];
  std::size_t off = 0;
  for (std::size_t i = 0; i < out_shape[0]; ++i)
    for (std::size_t j = 0; j < out_shape[1]; ++j)
      for (std::size_t k = 0; k < out_shape[2]; ++k) {
        const std::array<double, 3> f{i * ratio[0], j * ratio[1], k * ratio[2]};
        for (std::size_t ch = 0; ch < c; ++ch) y[off++] = sample_trilinear(x, ch, f);
      }
  return y;
}

Tensor rotate_volume(const Tensor& x, const std::array<double, 3>& degrees) {
  require_volume(x, "rotate_volume");
  if (degrees[0] == 0.0 && degrees[1] == 0.0 && degrees[2] == 0.0) return x;
  constexpr double kRad = std::numbers::pi / 180.0;
  const Mat3 r = matmul3(axis_rotation(2, degrees[2] * kRad),
                         matmul3(axis_rotation(1, degrees[1] * kRad), axis_rotation(0, degrees[0] * kRad)));
  const std::size_t d[3] = {x.shape()[0], x.shape()[1], x.shape()[2]};
  const std::size_t c = x.shape()[3];
  const std::array<double, 3> center{(d[0] - 1) / 2.0, (d[1] - 1) / 2.0, (d[2] - 1) / 2.0};
  Tensor y(x.shape());
  std::size_t off = 0;
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k) {
        const double p[3] = {i - center[0], j - center[1], k - center[2]};
        std::array<double, 3> src{};
        // Inverse map: src = R^T p + center.
        for (int a = 0; a < 3; ++a) src[a] = r[0][a] * p[0] + r[1][a] * p[1] + r[2][a] * p[2] + center[a];
        for (std::size_t ch = 0; ch < c; ++ch) y[off++] = sample_trilinear(x, ch, src);
      }
  return y;
}

Tensor shift_volume(const Tensor& x, const std::array<int, 3>& offset) {
  require_volume(x, "shift_volume");
  if (offset[0] == 0 && offset[1] == 0 && offset[2] == 0) return x;
  const long long d[3] = {static_cast<long long>(x.shape()[0]), static_cast<long long>(x.shape()[1]),
                          static_cast<long long>(x.shape()[2])};
  const std::size_t c = x.shape()[3];
  Tensor y(x.shape());
  for (long long i = 0; i < d[0]; ++i) {
    const long long si = i - offset[0];
    if (si < 0 || si >= d[0]) continue;
    for (long long j = 0; j < d[1]; ++j) {
      const long long sj = j - offset[1];
      if (sj < 0 || sj >= d[1]) continue;
      for (long long k = 0; k < d[2]; ++k) {
        const long long sk = k - offset[2];
        if (sk < 0 || sk >= d[2]) continue;
        const auto dst = static_cast<std::size_t>((i * d[1] + j) * d[2] + k) * c;
        const auto src = static_cast<std::size_t>((si * d[1] + sj) * d[2] + sk) * c;
        for (std::size_t ch = 0; ch < c; ++ch) y[dst + ch] = x[src + ch];
      }
    }
  }
  return y;
}

Tensor scale_intensity(const Tensor& x, double factor) { return scale(x, static_cast<float>(factor)); }

Tensor add_noise(const Tensor& x, double sigma, Rng& rng) {
  if (sigma == 0.0) return x;
  std::normal_distribution<double> n(0.0, sigma);
  Tensor y = x;
  for (float& v : y.values()) v = static_cast<float>(v + n(rng));
  return y;
}

Tensor temporal_shift(const Tensor& x, long long k) {
  if (x.empty()) throw EmptySequenceError("temporal_shift: empty sequence");
  const long long frames = static_cast<long long>(x.shape()[0]);
  const long long shift = ((k % frames) + frames) % frames;
  if (shift == 0) return x;
  const std::size_t n = x.size() / static_cast<std::size_t>(frames);
  Tensor y(x.shape());
  for (long long t = 0; t < frames; ++t) {
    const long long src = (t - shift + frames) % frames;
    std::copy(x.data() + src * static_cast<long long>(n), x.data() + (src + 1) * static_cast<long long>(n),
              y.data() + t * static_cast<long long>(n));
  }
  return y;
}

std::array<double, 3> sample_rotation(const AugmentationPolicy& policy, Rng& rng) {
  std::array<double, 3> a{};
  for (int i = 0; i < 3; ++i) {
    const double m = policy.rotation_max_degrees[i];
    a[i] = m > 0.0 ? uniform(rng, -m, m) : 0.0;
  }
  return a;
}

std::array<int, 3> sample_shift(const AugmentationPolicy& policy, Rng& rng) {
  std::array<int, 3> s{};
  for (int i = 0; i < 3; ++i) {
    const int m = policy.shift_max_voxels[i];
    s[i] = m > 0 ? static_cast<int>(uniform_int(rng, -m, m)) : 0;
  }
  return s;
}

double sample_intensity_scale(const AugmentationPolicy& policy, Rng& rng) {
  if (policy.intensity_low == policy.intensity_high) return policy.intensity_low;
  return uniform(rng, policy.intensity_low, policy.intensity_high);
}

Tensor random_rotate_3d(const Tensor& x, const AugmentationPolicy& policy, Rng& rng) {
  return rotate_volume(x, sample_rotation(policy, rng));
}

Tensor random_shift_3d(const Tensor& x, const AugmentationPolicy& policy, Rng& rng) {
  return shift_volume(x, sample_shift(policy, rng));
}

Tensor random_intensity_scale(const Tensor& x, const AugmentationPolicy& policy, Rng& rng) {
  return scale_intensity(x, sample_intensity_scale(policy, rng));
}

Tensor add_gaussian_noise(const Tensor& x, const AugmentationPolicy& policy, Rng& rng) {
  return add_noise(x, policy.noise_sigma, rng);
}

Tensor augment_mri(const Tensor& x, const AugmentationPolicy& policy, Rng& rng, MriTransform* record) {
  MriTransform t;
  t.rotation_degrees = sample_rotation(policy, rng);
  t.shift = sample_shift(policy, rng);
  t.intensity_scale = sample_intensity_scale(policy, rng);
  t.noise_sigma = policy.noise_sigma;
  Tensor y = rotate_volume(x, t.rotation_degrees);
  y = shift_volume(y, t.shift);
  if (t.intensity_scale != 1.0) y = scale_intensity(y, t.intensity_scale);
  y = add_noise(y, t.noise_sigma, rng);
  if (record) *record = t;
  return y;
}

Tensor augment_fmri(const Tensor& x, const AugmentationPolicy& policy, Rng& rng, FmriTransform* record) {
  require_series(x, "augment_fmri");
  FmriTransform t;
  t.rotation_degrees = sample_rotation(policy, rng);
  t.shift = sample_shift(policy, rng);
  const int tmax = policy.temporal_shift_max_frames;
  t.temporal_shift = tmax > 0 ? uniform_int(rng, -tmax, tmax) : 0;
  const bool spike = policy.motion_artifact_probability > 0.0 && uniform(rng, 0.0, 1.0) < policy.motion_artifact_probability;
  const std::size_t frames = x.shape()[0];
  if (spike) {
    t.motion_frame = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(frames) - 1));
    const int m = policy.motion_shift_max_voxels;
    for (int& o : t.motion_offset) o = m > 0 ? static_cast<int>(uniform_int(rng, -m, m)) : 0;
  }

  std::vector<Tensor> out;
  out.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    out.push_back(shift_volume(rotate_volume(x.slice_leading(f), t.rotation_degrees), t.shift));
  }
  Tensor y = temporal_shift(stack(out), t.temporal_shift);
  if (t.motion_frame) {
    const std::size_t n = y.size() / frames;
    const Tensor moved = shift_volume(y.slice_leading(*t.motion_frame), t.motion_offset);
    std::copy(moved.values().begin(), moved.values().end(), y.data() + *t.motion_frame * n);
  }
  if (record) *record = t;
  return y;
}

AugmentedDataset expand_dataset(std::span<const Sample> subjects, const AugmentationPolicy& policy, int workers) {
  policy.validate();
  const std::size_t per_subject = 1 + policy.copies_per_subject;
  AugmentedDataset out;
  out.samples.resize(subjects.size() * per_subject);
  out.provenance.resize(out.samples.size());
  parallel_for(out.samples.size(), workers, [&](std::size_t task) {
    const std::size_t s = task / per_subject;
    const std::size_t copy = task % per_subject;
    const Sample& src = subjects[s];
    Sample dst;
    dst.label = src.label;
    char id[32];
    std::snprintf(id, sizeof id, "_c%02zu", copy);
    dst.subject_id = src.subject_id + id;
    std::string params = "original";
    std::string mri_params, fmri_params;
    if (src.mri) {
      Tensor mri = policy.target_mri_shape ? resize_volume(*src.mri, *policy.target_mri_shape) : *src.mri;
      if (copy > 0) {
        Rng rng(derive_seed({policy.seed, s, copy, 1}));
        MriTransform t;
        mri = augment_mri(mri, policy, rng, &t);
        mri_params = describe(t);
      }
      dst.mri = std::move(mri);
    }
    if (src.fmri) {
      if (copy > 0) {
        Rng rng(derive_seed({policy.seed, s, copy, 2}));
        FmriTransform t;
        dst.fmri = augment_fmri(*src.fmri, policy, rng, &t);
        fmri_params = describe(t);
      } else {
        dst.fmri = src.fmri;
      }
    }
    if (copy > 0) {
      params = mri_params;
      if (!fmri_params.empty()) params += (params.empty() ? "" : ";") + fmri_params;
    }
    out.provenance[task] = {dst.subject_id, src.subject_id, copy, src.label, params};
    out.samples[task] = std::move(dst);
  });
  return out;
}

std::string format_provenance(std::span<const ProvenanceRecord> records) {
  std::ostringstream os;
  for (const auto& r : records) {
    os << r.sample_id << '\t' << r.source_subject << '\t' << r.copy_index << '\t' << r.label << '\t'
       << r.transform_params << '\n';
  }
  return os.str();
}

void write_provenance(std::span<const ProvenanceRecord> records, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << format_provenance(records);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<ProvenanceRecord> read_provenance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<ProvenanceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) throw FormatError(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    try {
      out.push_back({cols[0], cols[1], std::stoull(cols[2]), std::stoi(cols[3]), cols[4]});
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed provenance line");
    }
  }
  return out;
}

}  // namespace nf
