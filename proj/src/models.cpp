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

#include "neurofuse/models.hpp"

#include "neurofuse/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace nf {

namespace {

struct ArchInfo {
  Architecture arch;
  const char* name;
};

constexpr std::array<ArchInfo, 6> kArchitectures{{
    {Architecture::kMultimodalCnnLstm, "mm-3dcnn-lstm"},
    {Architecture::kMultimodalCnnGru, "mm-3dcnn-gru"},
    {Architecture::kLstm3D, "3dlstm"},
    {Architecture::kGru3D, "3dgru"},
    {Architecture::kCnn3D, "3dcnn"},
    {Architecture::kCnn2D, "2dcnn"},
}};

bool uses_gru(Architecture arch) { return arch == Architecture::kMultimodalCnnGru || arch == Architecture::kGru3D; }

bool uses_frame_cnn(Architecture arch) {
  return arch == Architecture::kMultimodalCnnLstm || arch == Architecture::kMultimodalCnnGru;
}

Extent3 kernel_for(Architecture arch) { return arch == Architecture::kCnn2D ? Extent3{3, 3, 1} : Extent3{3, 3, 3}; }

std::string shape_text(const std::optional<Shape>& s) {
  if (!s) return "none";
  std::string out;
  for (std::size_t i = 0; i < s->rank(); ++i) out += (i ? "x" : "") + std::to_string((*s)[i]);
  return out;
}

std::size_t conv_params(Extent3 k, std::size_t cin, std::size_t cout) { return k.x * k.y * k.z * cin * cout + cout; }

std::size_t recurrent_params(bool gru, std::size_t in, std::size_t units) {
  return (gru ? 3 : 4) * (in * units + units * units + units);
}

}  // namespace

std::string architecture_name(Architecture arch) {
  for (const auto& a : kArchitectures)
    if (a.arch == arch) return a.name;
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& a : kArchitectures)
    if (lower == a.name) return a.arch;
  if (lower == "3dcnn-lstm") return Architecture::kMultimodalCnnLstm;
  if (lower == "3dcnn-gru") return Architecture::kMultimodalCnnGru;
  throw ConfigError("unknown architecture '" + name + "'");
}

bool uses_mri(Architecture arch) {
  return arch != Architecture::kLstm3D && arch != Architecture::kGru3D;
}

bool uses_fmri(Architecture arch) {
  return arch != Architecture::kCnn3D && arch != Architecture::kCnn2D;
}

// --- ModelConfig -------------------------------------------------------------

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) throw ConfigError("dropout_rate must be in [0, 1)");
  const std::string name = architecture_name(architecture);
  if (uses_mri(architecture) != mri_shape.has_value()) {
    throw ConfigError(name + (mri_shape ? " does not take an MRI input" : " requires an MRI shape"));
  }
  if (uses_fmri(architecture) != fmri_shape.has_value()) {
    throw ConfigError(name + (fmri_shape ? " does not take an fMRI input" : " requires an fMRI shape"));
  }
  if (mri_shape && (mri_shape->rank() != 4 || (*mri_shape)[3] != 1)) {
    throw ConfigError("MRI shape must be [d1,d2,d3,1], got " + mri_shape->to_string());
  }
  if (fmri_shape && (fmri_shape->rank() != 5 || (*fmri_shape)[4] != 1)) {
    throw ConfigError("fMRI shape must be [T,d1,d2,d3,1], got " + fmri_shape->to_string());
  }
  if (architecture == Architecture::kCnn2D && (*mri_shape)[2] != 1) {
    throw ConfigError("2dcnn requires a singleton third spatial extent, got " + mri_shape->to_string());
  }
}

std::string ModelConfig::serialize() const {
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.9g", static_cast<double>(dropout_rate));
  std::ostringstream os;
  os << "architecture = " << architecture_name(architecture) << '\n'
     << "mri_shape = " << shape_text(mri_shape) << '\n'
     << "fmri_shape = " << shape_text(fmri_shape) << '\n'
     << "num_classes = " << num_classes << '\n'
     << "dropout_rate = " << rate << '\n'
     << "seed = " << seed << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model config lacks '") + key + "'");
    return it->second;
  };
  auto shape_of = [](const std::string& v) -> std::optional<Shape> {
    if (v == "none") return std::nullopt;
    return Shape(parse_extents(v));
  };
  ModelConfig c;
  try {
    c.architecture = parse_architecture(need("architecture"));
    c.mri_shape = shape_of(need("mri_shape"));
    c.fmri_shape = shape_of(need("fmri_shape"));
    c.num_classes = static_cast<std::size_t>(std::stoull(need("num_classes")));
    c.dropout_rate = std::stof(need("dropout_rate"));
    c.seed = std::stoull(need("seed"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

// --- Planning ----------------------------------------------------------------

ArchitecturePlan plan_architecture(const ModelConfig& config) {
  config.validate();
  ArchitecturePlan plan;
  plan.num_classes = config.num_classes;
  const Extent3 kernel = kernel_for(config.architecture);
  const bool gru = uses_gru(config.architecture);
  std::size_t params = 0;
  try {
    if (config.mri_shape) {
      const auto st = ConvBlock::plan(*config.mri_shape, kernel, kConvFilters);
      plan.mri_stages = {{"conv3d_1", st[0]}, {"pool3d_1", st[1]}, {"conv3d_2", st[2]}, {"pool3d_2", st[3]},
                         {"flatten", Shape{st[3].numel()}}, {"dense_128", Shape{kMriFeatures}}};
      plan.mri_features = kMriFeatures;
      params += conv_params(kernel, 1, kConvFilters) + conv_params(kernel, kConvFilters, kConvFilters) +
                st[3].numel() * kMriFeatures + kMriFeatures;
    }
    if (config.fmri_shape) {
      const std::size_t frames = (*config.fmri_shape)[0];
      const Shape frame = config.fmri_shape->drop_leading();
      if (uses_frame_cnn(config.architecture)) {
        const auto st = ConvBlock::plan(frame, kernel, kConvFilters);
        plan.fmri_stages = {{"td_conv3d_1", st[0].prepend(frames)}, {"td_pool3d_1", st[1].prepend(frames)},
                            {"td_conv3d_2", st[2].prepend(frames)}, {"td_pool3d_2", st[3].prepend(frames)}};
        plan.fmri_frame_width = st[3].numel();
        params += conv_params(kernel, 1, kConvFilters) + conv_params(kernel, kConvFilters, kConvFilters);
      } else {
        plan.fmri_frame_width = frame.numel();
      }
      plan.fmri_stages.push_back({"td_flatten", Shape{frames, plan.fmri_frame_width}});
      std::size_t in = plan.fmri_frame_width;
      const char* cell = gru ? "gru" : "lstm";
      for (std::size_t l = 0; l < kRecurrentDepth; ++l) {
        const bool last = l + 1 == kRecurrentDepth;
        plan.fmri_stages.push_back({std::string(cell) + "_" + std::to_string(l + 1),
                                    last ? Shape{kRecurrentUnits} : Shape{frames, kRecurrentUnits}});
        params += recurrent_params(gru, in, kRecurrentUnits);
        in = kRecurrentUnits;
      }
      plan.fmri_features = kRecurrentUnits;
    }
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("shapes incompatible with ") + architecture_name(config.architecture) + ": " +
                      e.what());
  }
  plan.fusion_input = plan.mri_features + plan.fmri_features;
  plan.head_stages = {{"concat", Shape{plan.fusion_input}},
                      {"dense_64", Shape{kFusionHidden}},
                      {"dropout", Shape{kFusionHidden}},
                      {"dense_c", Shape{config.num_classes}},
                      {"softmax", Shape{config.num_classes}}};
  params += plan.fusion_input * kFusionHidden + kFusionHidden + kFusionHidden * config.num_classes +
            config.num_classes;
  plan.parameter_count = params;
  return plan;
}

// --- Model -------------------------------------------------------------------

namespace {

template <class P, class M>
std::vector<P> collect_parameters(M& model) {
  std::vector<P> out;
  auto append = [&out](auto&& list) { out.insert(out.end(), list.begin(), list.end()); };
  if (model.mri) {
    append(model.mri->cnn.parameters());
    append(model.mri->project.parameters());
  }
  if (model.fmri) {
    std::visit([&](auto& enc) { append(enc.parameters()); }, model.fmri->encoder);
    for (auto& layer : model.fmri->stack) std::visit([&](auto& l) { append(l.parameters()); }, layer);
  }
  append(model.head.hidden.parameters());
  append(model.head.classifier.parameters());
  return out;
}

}  // namespace

std::vector<Tensor*> Model::parameters() { return collect_parameters<Tensor*>(*this); }

std::vector<const Tensor*> Model::parameters() const { return collect_parameters<const Tensor*>(*this); }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

Model build_model(const ModelConfig& config) {
  const ArchitecturePlan plan = plan_architecture(config);
  const Extent3 kernel = kernel_for(config.architecture);
  Rng rng(config.seed);
  Model model;
  model.config = config;
  if (config.mri_shape) {
    ConvBlock cnn = ConvBlock::create(*config.mri_shape, kernel, kConvFilters, rng);
    const std::size_t flat = cnn.output_width(*config.mri_shape);
    model.mri = MriBranch{std::move(cnn), DenseLayer::glorot(flat, kMriFeatures, rng)};
  }
  if (config.fmri_shape) {
    FmriBranch branch;
    const Shape frame = config.fmri_shape->drop_leading();
    if (uses_frame_cnn(config.architecture)) {
      branch.encoder = ConvBlock::create(frame, kernel, kConvFilters, rng);
    } else {
      branch.encoder = FlattenEncoder{};
    }
    std::size_t in = plan.fmri_frame_width;
    for (std::size_t l = 0; l < kRecurrentDepth; ++l) {
      const bool seq = l + 1 < kRecurrentDepth;
      if (uses_gru(config.architecture)) {
        branch.stack.emplace_back(GRULayer::glorot(in, kRecurrentUnits, seq, rng));
      } else {
        branch.stack.emplace_back(LSTMLayer::glorot(in, kRecurrentUnits, seq, rng));
      }
      in = kRecurrentUnits;
    }
    model.fmri = std::move(branch);
  }
  model.head.hidden = DenseLayer::glorot(plan.fusion_input, kFusionHidden, rng);
  model.head.dropout = DropoutLayer{config.dropout_rate, derive_seed({config.seed, 0x64726f70ull})};
  model.head.classifier = DenseLayer::glorot(kFusionHidden, config.num_classes, rng);
  return model;
}

// --- Forward / backward ------------------------------------------------------

ModelForward model_forward(const Model& model, const Sample& sample, bool training, std::uint64_t dropout_stream) {
  const ModelConfig& cfg = model.config;
  ModelCache cache;
  std::vector<Tensor> features;

  if (model.mri) {
    try {
      if (!sample.mri) throw ShapeError("sample has no MRI volume");
      if (!(sample.mri->shape() == *cfg.mri_shape)) {
        throw ShapeError("input " + sample.mri->shape().to_string() + " != expected " + cfg.mri_shape->to_string());
      }
      auto cnn = model.mri->cnn.forward(*sample.mri);
      auto proj = dense_forward(model.mri->project, cnn.y);
      cache.mri_cnn = std::move(cnn.cache);
      cache.mri_project = std::move(proj.cache);
      cache.v_mri = proj.y;
      features.push_back(std::move(proj.y));
    } catch (const ShapeError& e) {
      throw ShapeError(std::string("mri branch: ") + e.what());
    }
  }

  if (model.fmri) {
    try {
      if (!sample.fmri) throw ShapeError("sample has no fMRI series");
      if (!(sample.fmri->shape() == *cfg.fmri_shape)) {
        throw ShapeError("input " + sample.fmri->shape().to_string() + " != expected " +
                         cfg.fmri_shape->to_string());
      }
      Tensor seq = std::visit(
          [&](const auto& enc) {
            auto td = time_distributed_forward(enc, *sample.fmri);
            cache.fmri_encoder = std::move(td.cache);
            return std::move(td.y);
          },
          model.fmri->encoder);
      for (const auto& layer : model.fmri->stack) {
        seq = std::visit(
            [&](const auto& l) {
              auto out = recurrent_forward(l, seq);
              cache.fmri_stack.emplace_back(std::move(out.cache));
              return std::move(out.y);
            },
            layer);
      }
      cache.v_fmri = seq;
      features.push_back(std::move(seq));
    } catch (const ShapeError& e) {
      throw ShapeError(std::string("fmri branch: ") + e.what());
    }
  }

  const Tensor fused = concat(features);
  auto hidden = dense_forward(model.head.hidden, fused);
  cache.hidden = std::move(hidden.cache);
  cache.hidden_pre = hidden.y;
  auto dropped = dropout_forward(model.head.dropout, relu_forward(hidden.y), training, dropout_stream);
  cache.dropout = std::move(dropped.cache);
  auto logits = dense_forward(model.head.classifier, dropped.y);
  cache.classifier = std::move(logits.cache);
  cache.logits = logits.y;
  cache.probabilities = softmax(logits.y);

  Prediction pred;
  pred.probabilities = cache.probabilities;
  pred.predicted_class = static_cast<std::size_t>(
      std::max_element(pred.probabilities.values().begin(), pred.probabilities.values().end()) -
      pred.probabilities.values().begin());
  return {std::move(pred), std::move(cache)};
}

Gradients model_backward(const Model& model, const ModelCache& cache, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= model.config.num_classes) {
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(model.config.num_classes) + " classes");
  }
  return model_backward_from_logits(model, cache,
                                    softmax_ce_logit_gradient(cache.probabilities, static_cast<std::size_t>(label)));
}

Gradients model_backward_from_logits(const Model& model, const ModelCache& cache, const Tensor& dlogits) {
  if (!(dlogits.shape() == cache.logits.shape())) throw ShapeError("logit gradient shape mismatch");

  DenseGrads cls = dense_backward(model.head.classifier, cache.classifier, dlogits);
  Tensor dz = relu_backward(cache.hidden_pre, dropout_backward(cache.dropout, cls.dx));
  DenseGrads hid = dense_backward(model.head.hidden, cache.hidden, dz);

  Gradients out;
  std::size_t offset = 0;
  auto slice = [&](std::size_t n) {
    Tensor part(Shape{n}, std::vector<float>(hid.dx.data() + offset, hid.dx.data() + offset + n));
    offset += n;
    return part;
  };

  if (model.mri) {
    DenseGrads proj = dense_backward(model.mri->project, *cache.mri_project, slice(cache.v_mri.size()));
    auto [dx, cnn] = model.mri->cnn.backward(*cache.mri_cnn, proj.dx);
    for (Tensor& g : std::move(cnn).release()) out.push_back(std::move(g));
    out.push_back(std::move(proj.dweights));
    out.push_back(std::move(proj.dbias));
  }

  if (model.fmri) {
    const auto& stack = model.fmri->stack;
    if (cache.fmri_stack.size() != stack.size()) throw ShapeError("fmri cache does not match model");
    std::vector<std::vector<Tensor>> layer_grads(stack.size());
    Tensor d = slice(cache.v_fmri.size());
    for (std::size_t l = stack.size(); l-- > 0;) {
      std::visit(
          [&](const auto& layer) {
            using Layer = std::decay_t<decltype(layer)>;
            using Cache = std::conditional_t<std::is_same_v<Layer, LSTMLayer>, LSTMCache, GRUCache>;
            auto back = recurrent_backward(layer, std::get<Cache>(cache.fmri_stack[l]), d);
            d = std::move(back.dxs);
            layer_grads[l] = std::move(back.dparams).release();
          },
          stack[l]);
    }
    std::visit(
        [&](const auto& enc) {
          using Enc = std::decay_t<decltype(enc)>;
          auto [dx, grads] = time_distributed_backward(enc, std::get<TimeDistributedCache<Enc>>(*cache.fmri_encoder), d);
          for (Tensor& g : std::move(grads).release()) out.push_back(std::move(g));
        },
        model.fmri->encoder);
    for (auto& lg : layer_grads)
      for (Tensor& g : lg) out.push_back(std::move(g));
  }

  out.push_back(std::move(hid.dweights));
  out.push_back(std::move(hid.dbias));
  out.push_back(std::move(cls.dweights));
  out.push_back(std::move(cls.dbias));
  return out;
}

// --- Checkpoints -------------------------------------------------------------

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out = io::open_out(path);
  out.write(kCheckpointMagic, 8);
  const std::string text = model.config.serialize();
  io::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* p : model.parameters()) write_tensor_record(out, *p);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in = io::open_in(path);
  io::expect_magic(in, kCheckpointMagic, path);
  const auto length = io::get_le<std::uint64_t>(in);
  if (length > (1u << 20)) throw FormatError("checkpoint config block too large");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw LengthError("truncated checkpoint config");
  ModelConfig config = ModelConfig::parse(text);
  Model model = build_model(config);
  for (Tensor* p : model.parameters()) {
    Tensor t = read_tensor_record(in);
    if (!(t.shape() == p->shape())) {
      throw FormatError("checkpoint tensor " + t.shape().to_string() + " does not match model parameter " +
                        p->shape().to_string());
    }
    *p = std::move(t);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint parameters");
  return model;
}

}  // namespace nf
