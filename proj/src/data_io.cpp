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

#include "neurofuse/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "neurofuse/errors.hpp"
#include "neurofuse/parallel.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/tensor_io.hpp"

namespace nf {

namespace fs = std::filesystem;

namespace {

// Header field offsets (NIfTI-1).
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffIntentCode = 68;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffDescrip = 148;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffMagic = 344;
constexpr std::size_t kDescripLength = 80;

template <class U>
U load_uint(const unsigned char* p, std::endian order) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const std::size_t shift = order == std::endian::little ? i : sizeof(U) - 1 - i;
    v |= static_cast<U>(static_cast<U>(p[i]) << (8 * shift));
  }
  return v;
}

template <class U>
void store_uint(unsigned char* p, U v, std::endian order) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const std::size_t shift = order == std::endian::little ? i : sizeof(U) - 1 - i;
    p[i] = static_cast<unsigned char>(v >> (8 * shift));
  }
}

std::int16_t load_i16(const unsigned char* p, std::endian o) {
  return std::bit_cast<std::int16_t>(load_uint<std::uint16_t>(p, o));
}
std::int32_t load_i32(const unsigned char* p, std::endian o) {
  return std::bit_cast<std::int32_t>(load_uint<std::uint32_t>(p, o));
}
float load_f32(const unsigned char* p, std::endian o) { return std::bit_cast<float>(load_uint<std::uint32_t>(p, o)); }
double load_f64(const unsigned char* p, std::endian o) { return std::bit_cast<double>(load_uint<std::uint64_t>(p, o)); }

void store_i16(unsigned char* p, std::int16_t v, std::endian o) {
  store_uint<std::uint16_t>(p, std::bit_cast<std::uint16_t>(v), o);
}
void store_i32(unsigned char* p, std::int32_t v, std::endian o) {
  store_uint<std::uint32_t>(p, std::bit_cast<std::uint32_t>(v), o);
}
void store_f32(unsigned char* p, float v, std::endian o) { store_uint<std::uint32_t>(p, std::bit_cast<std::uint32_t>(v), o); }

int bitpix_for(std::int16_t datatype) {
  switch (datatype) {
    case kNiftiUint8: return 8;
    case kNiftiInt16: return 16;
    case kNiftiFloat32: return 32;
    case kNiftiFloat64: return 64;
    default:
      throw UnsupportedTypeError("unsupported NIfTI datatype code " + std::to_string(datatype));
  }
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return bytes;
}

bool has_extension(const std::string& path, const char* ext) {
  std::string e = fs::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

// Spatial extents (x,y,z) and frame count from dim[], after validation.
struct NiftiLayout {
  std::vector<std::size_t> spatial;
  std::size_t frames = 1;
};

NiftiLayout layout_of(const NiftiHeader& h) {
  const int rank = h.dim[0];
  if (rank < 1 || rank > 7) throw FormatError("NIfTI dim[0] = " + std::to_string(rank) + " is outside 1..7");
  for (int i = 1; i <= rank; ++i) {
    if (h.dim[i] < 1) throw FormatError("NIfTI dim[" + std::to_string(i) + "] must be >= 1");
  }
  NiftiLayout layout;
  if (rank <= 3) {
    for (int i = 1; i <= rank; ++i) layout.spatial.push_back(static_cast<std::size_t>(h.dim[i]));
    return layout;
  }
  for (int i = 5; i <= rank; ++i) {
    if (h.dim[i] != 1) throw UnsupportedTypeError("NIfTI files with more than 4 used dimensions are not supported");
  }
  layout.spatial = {static_cast<std::size_t>(h.dim[1]), static_cast<std::size_t>(h.dim[2]),
                    static_cast<std::size_t>(h.dim[3])};
  layout.frames = static_cast<std::size_t>(h.dim[4]);
  return layout;
}

}  // namespace

std::size_t NiftiHeader::voxel_count() const {
  const NiftiLayout layout = layout_of(*this);
  std::size_t n = layout.frames;
  for (std::size_t e : layout.spatial) n *= e;
  return n;
}

std::endian detect_nifti_byte_order(std::span<const unsigned char> bytes) {
  if (bytes.size() < kNiftiHeaderSize) throw LengthError("NIfTI header needs 348 bytes, got " + std::to_string(bytes.size()));
  if (load_i32(bytes.data() + kOffSizeofHdr, std::endian::little) == 348) return std::endian::little;
  if (load_i32(bytes.data() + kOffSizeofHdr, std::endian::big) == 348) return std::endian::big;
  throw FormatError("NIfTI sizeof_hdr is not 348 in either byte order");
}

NiftiHeader parse_nifti_header(std::span<const unsigned char> bytes) {
  const std::endian o = detect_nifti_byte_order(bytes);
  const unsigned char* p = bytes.data();
  NiftiHeader h;
  std::memcpy(h.magic.data(), p + kOffMagic, 4);
  const bool single = std::memcmp(h.magic.data(), "n+1\0", 4) == 0;
  const bool pair = std::memcmp(h.magic.data(), "ni1\0", 4) == 0;
  if (!single && !pair) throw FormatError("bad NIfTI magic");
  h.sizeof_hdr = load_i32(p + kOffSizeofHdr, o);
  for (std::size_t i = 0; i < 8; ++i) h.dim[i] = load_i16(p + kOffDim + 2 * i, o);
  h.intent_code = load_i16(p + kOffIntentCode, o);
  h.datatype = load_i16(p + kOffDatatype, o);
  h.bitpix = load_i16(p + kOffBitpix, o);
  for (std::size_t i = 0; i < 8; ++i) h.pixdim[i] = load_f32(p + kOffPixdim + 4 * i, o);
  h.vox_offset = load_f32(p + kOffVoxOffset, o);
  h.scl_slope = load_f32(p + kOffSclSlope, o);
  h.scl_inter = load_f32(p + kOffSclInter, o);
  h.xyzt_units = p[kOffXyztUnits];
  h.qform_code = load_i16(p + kOffQformCode, o);
  h.sform_code = load_i16(p + kOffSformCode, o);
  const char* d = reinterpret_cast<const char*>(p + kOffDescrip);
  h.descrip.assign(d, strnlen(d, kDescripLength));

  layout_of(h);
  if (h.bitpix != bitpix_for(h.datatype)) {
    throw FormatError("NIfTI bitpix " + std::to_string(h.bitpix) + " does not match datatype " +
                      std::to_string(h.datatype));
  }
  if (!(h.vox_offset >= 0.0f) || (single && h.vox_offset < static_cast<float>(kNiftiHeaderSize))) {
    throw FormatError("NIfTI vox_offset is invalid");
  }
  return h;
}

std::array<unsigned char, kNiftiHeaderSize> encode_nifti_header(const NiftiHeader& h, std::endian o) {
  std::array<unsigned char, kNiftiHeaderSize> bytes{};
  unsigned char* p = bytes.data();
  store_i32(p + kOffSizeofHdr, h.sizeof_hdr, o);
  for (std::size_t i = 0; i < 8; ++i) store_i16(p + kOffDim + 2 * i, h.dim[i], o);
  store_i16(p + kOffIntentCode, h.intent_code, o);
  store_i16(p + kOffDatatype, h.datatype, o);
  store_i16(p + kOffBitpix, h.bitpix, o);
  for (std::size_t i = 0; i < 8; ++i) store_f32(p + kOffPixdim + 4 * i, h.pixdim[i], o);
  store_f32(p + kOffVoxOffset, h.vox_offset, o);
  store_f32(p + kOffSclSlope, h.scl_slope, o);
  store_f32(p + kOffSclInter, h.scl_inter, o);
  p[kOffXyztUnits] = h.xyzt_units;
  store_i16(p + kOffQformCode, h.qform_code, o);
  store_i16(p + kOffSformCode, h.sform_code, o);
  std::memcpy(p + kOffDescrip, h.descrip.data(), std::min(h.descrip.size(), kDescripLength - 1));
  std::memcpy(p + kOffMagic, h.magic.data(), 4);
  return bytes;
}

NiftiHeader read_nifti_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::array<unsigned char, kNiftiHeaderSize> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), kNiftiHeaderSize);
  if (static_cast<std::size_t>(in.gcount()) < kNiftiHeaderSize) throw LengthError("'" + path + "' is shorter than a NIfTI header");
  return parse_nifti_header(bytes);
}

Tensor read_nifti(const std::string& path) {
  const std::vector<unsigned char> file = read_bytes(path);
  const std::endian o = detect_nifti_byte_order(file);
  const NiftiHeader h = parse_nifti_header(file);
  const NiftiLayout layout = layout_of(h);

  std::vector<unsigned char> paired;
  const std::vector<unsigned char>* data = &file;
  if (!h.single_file()) {
    paired = read_bytes(fs::path(path).replace_extension(".img").string());
    data = &paired;
  }

  const std::size_t n = h.voxel_count();
  const std::size_t width = static_cast<std::size_t>(h.bitpix) / 8;
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (data->size() < offset || (data->size() - offset) / width < n) {
    throw LengthError("NIfTI voxel data in '" + path + "' is truncated");
  }

  const bool scaled = h.scl_slope != 0.0f && std::isfinite(h.scl_slope);
  const double slope = scaled ? h.scl_slope : 1.0;
  const double inter = scaled ? h.scl_inter : 0.0;
  const unsigned char* src = data->data() + offset;
  auto value_at = [&](std::size_t i) -> float {
    const unsigned char* q = src + i * width;
    double raw = 0.0;
    switch (h.datatype) {
      case kNiftiUint8: raw = q[0]; break;
      case kNiftiInt16: raw = load_i16(q, o); break;
      case kNiftiFloat32:
        if (!scaled) return load_f32(q, o);
        raw = load_f32(q, o);
        break;
      case kNiftiFloat64: raw = load_f64(q, o); break;
      default: break;
    }
    return static_cast<float>(slope * raw + inter);
  };

  // Disk order is x fastest, then y, z, t; the tensor is row-major with time
  // leading and a unit channel trailing.
  std::vector<std::size_t> dims;
  if (h.dim[0] >= 4) dims.push_back(layout.frames);
  dims.insert(dims.end(), layout.spatial.begin(), layout.spatial.end());
  dims.push_back(1);
  Tensor t{Shape(dims)};
  auto out = t.values();

  std::array<std::size_t, 3> ext{1, 1, 1};
  for (std::size_t a = 0; a < layout.spatial.size(); ++a) ext[a] = layout.spatial[a];
  const std::size_t frame = ext[0] * ext[1] * ext[2];
  for (std::size_t f = 0; f < layout.frames; ++f) {
    for (std::size_t z = 0; z < ext[2]; ++z) {
      for (std::size_t y = 0; y < ext[1]; ++y) {
        for (std::size_t x = 0; x < ext[0]; ++x) {
          const std::size_t disk = f * frame + x + ext[0] * (y + ext[1] * z);
          const std::size_t row_major = f * frame + (x * ext[1] + y) * ext[2] + z;
          out[row_major] = value_at(disk);
        }
      }
    }
  }
  return t;
}

void write_nifti(const Tensor& t, const std::string& path) {
  const Shape& s = t.shape();
  if (s.rank() < 2 || s.rank() > 5 || s[s.rank() - 1] != 1) {
    throw ShapeError("write_nifti expects [d1,..,1] or [T,d1,d2,d3,1], got " + s.to_string());
  }
  NiftiHeader h;
  std::size_t frames = 1;
  std::vector<std::size_t> spatial;
  if (s.rank() == 5) {
    frames = s[0];
    spatial = {s[1], s[2], s[3]};
  } else {
    spatial.assign(s.dims().begin(), s.dims().end() - 1);
  }
  for (std::size_t e : spatial) {
    if (e > 32767) throw ShapeError("extent too large for NIfTI-1");
  }
  if (frames > 32767) throw ShapeError("frame count too large for NIfTI-1");
  h.dim[0] = static_cast<std::int16_t>(s.rank() == 5 ? 4 : spatial.size());
  for (std::size_t a = 0; a < spatial.size(); ++a) h.dim[a + 1] = static_cast<std::int16_t>(spatial[a]);
  if (s.rank() == 5) h.dim[4] = static_cast<std::int16_t>(frames);
  for (std::size_t i = static_cast<std::size_t>(h.dim[0]) + 1; i < 8; ++i) h.dim[i] = 1;
  h.pixdim.fill(1.0f);
  h.pixdim[0] = 1.0f;  // qfac

  const std::array<unsigned char, kNiftiHeaderSize> header = encode_nifti_header(h);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(kNiftiSingleFileOffset) + 4 * t.size(), 0);
  std::copy(header.begin(), header.end(), bytes.begin());

  std::array<std::size_t, 3> ext{1, 1, 1};
  for (std::size_t a = 0; a < spatial.size(); ++a) ext[a] = spatial[a];
  const std::size_t frame = ext[0] * ext[1] * ext[2];
  const auto in = t.values();
  unsigned char* dst = bytes.data() + static_cast<std::size_t>(kNiftiSingleFileOffset);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t x = 0; x < ext[0]; ++x) {
      for (std::size_t y = 0; y < ext[1]; ++y) {
        for (std::size_t z = 0; z < ext[2]; ++z) {
          const std::size_t row_major = f * frame + (x * ext[1] + y) * ext[2] + z;
          const std::size_t disk = f * frame + x + ext[0] * (y + ext[1] * z);
          store_f32(dst + 4 * disk, in[row_major], std::endian::little);
        }
      }
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

// --- Preprocessing -------------------------------------------------------------

Tensor standardize_intensity(const Tensor& x) {
  const Shape& s = x.shape();
  const bool series = s.rank() == 5 || (s.rank() == 4 && s[3] != 1);
  const std::size_t groups = series ? s[0] : 1;
  const std::size_t n = x.size() / groups;
  Tensor y(s);
  const auto in = x.values();
  auto out = y.values();
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += in[base + i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = in[base + i] - mean;
      var += d * d;
    }
    const double scale = 1.0 / (std::sqrt(var / static_cast<double>(n)) + kStandardizeEpsilon);
    for (std::size_t i = 0; i < n; ++i) out[base + i] = static_cast<float>((in[base + i] - mean) * scale);
  }
  return y;
}

// --- Labels --------------------------------------------------------------------

namespace {

struct LabelName {
  const char* key;  // normalized
  LabelSet set;
  int value;
};

constexpr LabelName kLabelNames[] = {
    {"ncs", LabelSet::kCognitive, 0},
    {"mci", LabelSet::kCognitive, 1},
    {"ad", LabelSet::kCognitive, 2},
    {"noimpairment", LabelSet::kImpairment, 0},
    {"nondemented", LabelSet::kImpairment, 0},
    {"verymildimpairment", LabelSet::kImpairment, 1},
    {"verymild", LabelSet::kImpairment, 1},
    {"verymilddemented", LabelSet::kImpairment, 1},
    {"mildimpairment", LabelSet::kImpairment, 2},
    {"mild", LabelSet::kImpairment, 2},
    {"milddemented", LabelSet::kImpairment, 2},
    {"moderateimpairment", LabelSet::kImpairment, 3},
    {"moderate", LabelSet::kImpairment, 3},
    {"moderatedemented", LabelSet::kImpairment, 3},
};

constexpr const char* kCognitiveNames[] = {"NCS", "MCI", "AD"};
constexpr const char* kImpairmentNames[] = {"no impairment", "very mild impairment", "mild impairment",
                                            "moderate impairment"};

const LabelName& lookup_label(const std::string& text) {
  std::string key;
  for (unsigned char c : text) {
    if (c == ' ' || c == '_' || c == '-' || c == '\t') continue;
    key.push_back(static_cast<char>(std::tolower(c)));
  }
  for (const LabelName& n : kLabelNames) {
    if (key == n.key) return n;
  }
  throw LabelError("unknown label '" + text + "'");
}

}  // namespace

int encode_label(const std::string& text) { return lookup_label(text).value; }

int encode_label(const std::string& text, LabelSet set) {
  const LabelName& n = lookup_label(text);
  if (n.set != set) throw LabelError("label '" + text + "' is not in the selected label set");
  return n.value;
}

LabelSet label_set_of(const std::string& text) { return lookup_label(text).set; }

int label_set_size(LabelSet set) { return set == LabelSet::kCognitive ? 3 : 4; }

std::string decode_label(int label, LabelSet set) {
  if (label < 0 || label >= label_set_size(set)) throw LabelError("label " + std::to_string(label) + " out of range");
  return set == LabelSet::kCognitive ? kCognitiveNames[label] : kImpairmentNames[label];
}

// --- Volumes and manifests -----------------------------------------------------

Tensor read_volume(const std::string& path) {
  if (has_extension(path, ".nft")) return load_tensor_file(path);
  if (has_extension(path, ".nii") || has_extension(path, ".hdr")) return read_nifti(path);
  throw FormatError("unrecognized volume extension in '" + path + "'");
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind(kStandardizedMarker, 0) == 0) {
      m.standardized = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    for (std::size_t i : {1u, 2u}) {
      if (fields[i] == "-") fields[i].clear();
    }
    if (fields[0].empty()) throw FormatError("manifest line " + std::to_string(line_no) + ": empty subject id");
    m.rows.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::string out;
  if (m.standardized) out += std::string(kStandardizedMarker) + "\n";
  out += "# subject_id\tmri_path\tfmri_path\tlabel\n";
  for (const ManifestRow& r : m.rows) {
    out += r.subject_id + '\t' + r.mri_path + '\t' + r.fmri_path + '\t' + r.label_text + '\n';
  }
  return out;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << format_manifest(m);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<Sample> load_dataset(const Manifest& m, const std::string& base_dir, const LoadOptions& options) {
  if (m.rows.empty()) throw ConfigError("manifest has no samples");
  const LabelSet set = label_set_of(m.rows.front().label_text);
  for (const ManifestRow& r : m.rows) {
    if (label_set_of(r.label_text) != set) throw ConfigError("manifest mixes label sets");
    if (options.need_mri && r.mri_path.empty()) throw ConfigError("subject '" + r.subject_id + "' has no MRI path");
    if (options.need_fmri && r.fmri_path.empty()) throw ConfigError("subject '" + r.subject_id + "' has no fMRI path");
  }
  auto resolve = [&](const std::string& p) {
    fs::path full = fs::path(p).is_absolute() ? fs::path(p) : fs::path(base_dir) / p;
    if (!fs::exists(full)) throw IoError("missing data file '" + full.string() + "'");
    return full.string();
  };

  std::vector<Sample> samples(m.rows.size());
  parallel_for(m.rows.size(), options.workers, [&](std::size_t i) {
    const ManifestRow& r = m.rows[i];
    Sample& s = samples[i];
    s.subject_id = r.subject_id;
    s.label = encode_label(r.label_text, set);
    if (options.need_mri) {
      Tensor t = read_volume(resolve(r.mri_path));
      s.mri = m.standardized ? std::move(t) : standardize_intensity(t);
    }
    if (options.need_fmri) {
      Tensor t = read_volume(resolve(r.fmri_path));
      s.fmri = m.standardized ? std::move(t) : standardize_intensity(t);
    }
  });
  return samples;
}

// --- Synthetic data ------------------------------------------------------------

namespace {

struct Blob {
  std::array<double, 3> center;
  double width;
  double amplitude;
};

// Evaluates background + blob on a normalized grid, with additive noise.
void render(std::span<float> out, const std::array<std::size_t, 3>& ext, const Blob& blob, double gain,
            double noise_sigma, Rng& rng) {
  std::normal_distribution<double> noise(0.0, noise_sigma);
  std::size_t i = 0;
  for (std::size_t x = 0; x < ext[0]; ++x) {
    for (std::size_t y = 0; y < ext[1]; ++y) {
      for (std::size_t z = 0; z < ext[2]; ++z, ++i) {
        const std::array<double, 3> u{(x + 0.5) / ext[0], (y + 0.5) / ext[1], (z + 0.5) / ext[2]};
        double r2 = 0.0;
        double b2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          r2 += (u[a] - blob.center[a]) * (u[a] - blob.center[a]);
          b2 += (u[a] - 0.5) * (u[a] - 0.5);
        }
        const double background = 0.3 * std::exp(-b2 / (2.0 * 0.35 * 0.35));
        const double signal = gain * blob.amplitude * std::exp(-r2 / (2.0 * blob.width * blob.width));
        out[i] = static_cast<float>(background + signal + noise(rng));
      }
    }
  }
}

Blob class_blob(int k, int num_classes, double base_width, Rng& rng) {
  const double theta = 2.0 * std::numbers::pi * k / num_classes;
  Blob b;
  b.center = {0.5 + 0.25 * std::cos(theta), 0.5 + 0.25 * std::sin(theta), 0.5};
  for (double& c : b.center) c += uniform(rng, -0.03, 0.03);
  b.width = base_width + 0.03 * k;
  b.amplitude = uniform(rng, 0.9, 1.1);
  return b;
}

std::array<std::size_t, 3> spatial_extents(const std::vector<std::size_t>& e, const char* what) {
  if (e.size() != 3) throw ConfigError(std::string(what) + " shape must have 3 spatial extents");
  for (std::size_t v : e) {
    if (v == 0) throw ConfigError(std::string(what) + " extents must be >= 1");
  }
  return {e[0], e[1], e[2]};
}

}  // namespace

std::vector<Sample> generate_synthetic_dataset(std::size_t n_per_class, const SyntheticShapes& shapes,
                                               std::uint64_t seed, int num_classes) {
  if (num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  const auto mri_ext = spatial_extents(shapes.mri, "MRI");
  std::optional<std::array<std::size_t, 3>> fmri_ext;
  std::size_t frames = 0;
  if (shapes.fmri) {
    if (shapes.fmri->size() != 4 || (*shapes.fmri)[0] == 0) throw ConfigError("fMRI shape must be [T,d1,d2,d3]");
    frames = (*shapes.fmri)[0];
    fmri_ext = spatial_extents({shapes.fmri->begin() + 1, shapes.fmri->end()}, "fMRI");
  }

  std::vector<Sample> out;
  out.reserve(n_per_class * static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t index = out.size();
      Rng rng(derive_seed({seed, 0x73796e74, index}));
      Sample s;
      char id[32];
      std::snprintf(id, sizeof id, "sub-%03zu", index + 1);
      s.subject_id = id;
      s.label = k;

      Tensor mri(Shape{mri_ext[0], mri_ext[1], mri_ext[2], 1});
      render(mri.values(), mri_ext, class_blob(k, num_classes, 0.12, rng), 1.0, 0.05, rng);
      s.mri = std::move(mri);

      if (fmri_ext) {
        const Blob blob = class_blob(k, num_classes, 0.18, rng);
        const double phase = uniform(rng, -0.2, 0.2);
        const double freq = k + 1;
        Tensor fmri(Shape{frames, (*fmri_ext)[0], (*fmri_ext)[1], (*fmri_ext)[2], 1});
        const std::size_t frame = fmri.size() / frames;
        for (std::size_t t = 0; t < frames; ++t) {
          const double gain = 1.0 + 0.6 * std::sin(2.0 * std::numbers::pi * freq * t / frames + phase);
          render(fmri.values().subspan(t * frame, frame), *fmri_ext, blob, gain, 0.05, rng);
        }
        s.fmri = std::move(fmri);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace nf
