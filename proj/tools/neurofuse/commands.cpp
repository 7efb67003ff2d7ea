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

#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "neurofuse/data_io.hpp"
#include "neurofuse/errors.hpp"
#include "neurofuse/metrics.hpp"
#include "neurofuse/tensor_io.hpp"

namespace nf::cli {
namespace fs = std::filesystem;

namespace {

void make_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

std::string parent_dir(const std::string& path) {
  const fs::path p = fs::path(path).parent_path();
  return p.empty() ? "." : p.string();
}

LabelSet label_set_for(int num_classes) {
  if (num_classes == 3) return LabelSet::kCognitive;
  if (num_classes == 4) return LabelSet::kImpairment;
  throw ConfigError("--classes must be 3 (NCS/MCI/AD) or 4 (impairment grades)");
}

LabelSet manifest_label_set(const Manifest& m) {
  if (m.rows.empty()) throw ConfigError("manifest has no rows");
  return label_set_of(m.rows.front().label_text);
}

std::vector<Sample> select(const std::vector<Sample>& all, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

void require_uniform_shapes(const std::vector<Sample>& samples, bool mri, bool fmri) {
  const Sample& first = samples.front();
  for (const Sample& s : samples) {
    if (mri && s.mri->shape() != first.mri->shape()) {
      throw ConfigError("sample '" + s.subject_id + "' has MRI shape " + s.mri->shape().to_string() + ", expected " +
                        first.mri->shape().to_string());
    }
    if (fmri && s.fmri->shape() != first.fmri->shape()) {
      throw ConfigError("sample '" + s.subject_id + "' has fMRI shape " + s.fmri->shape().to_string() + ", expected " +
                        first.fmri->shape().to_string());
    }
  }
}

constexpr const char* kSplitNames[] = {"train", "val", "test"};

void write_split(const std::vector<Sample>& samples, const Split& split, const std::string& path) {
  std::vector<const char*> where(samples.size(), nullptr);
  const std::vector<std::size_t>* parts[] = {&split.train, &split.val, &split.test};
  for (int p = 0; p < 3; ++p)
    for (std::size_t i : *parts[p]) where[i] = kSplitNames[p];
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "# sample_id\tsplit\n";
  for (std::size_t i = 0; i < samples.size(); ++i) out << samples[i].subject_id << '\t' << where[i] << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::map<std::string, std::string> read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(path + ":" + std::to_string(lineno) + ": expected 2 columns");
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace

void run_synth(const SynthOptions& o) {
  if (o.per_class < 1) throw ConfigError("--per-class must be >= 1");
  const LabelSet set = label_set_for(o.num_classes);
  SyntheticShapes shapes;
  shapes.mri = parse_extents(o.mri_shape);
  if (shapes.mri.size() != 3) throw ConfigError("--mri-shape needs 3 extents");
  if (o.fmri_shape == "none") {
    shapes.fmri.reset();
  } else {
    shapes.fmri = parse_extents(o.fmri_shape);
    if (shapes.fmri->size() != 4) throw ConfigError("--fmri-shape needs 4 extents (T x d1 x d2 x d3)");
  }
  make_dir(o.out);
  make_dir((fs::path(o.out) / "mri").string());
  if (shapes.fmri) make_dir((fs::path(o.out) / "fmri").string());

  const auto samples = generate_synthetic_dataset(o.per_class, shapes, o.seed, o.num_classes);
  Manifest manifest;
  for (const Sample& s : samples) {
    ManifestRow row{s.subject_id, "mri/" + s.subject_id + "_T1w.nii", "", decode_label(s.label, set)};
    write_nifti(*s.mri, (fs::path(o.out) / row.mri_path).string());
    if (s.fmri) {
      row.fmri_path = "fmri/" + s.subject_id + "_bold.nii";
      write_nifti(*s.fmri, (fs::path(o.out) / row.fmri_path).string());
    }
    manifest.rows.push_back(std::move(row));
  }
  write_manifest(manifest, (fs::path(o.out) / "manifest.tsv").string());
  std::printf("wrote %zu subjects to %s\n", samples.size(), o.out.c_str());
}

void run_augment(const AugmentOptions& o) {
  AugmentationPolicy policy = o.policy;
  if (o.target_shape == "keep") {
    policy.target_mri_shape.reset();
  } else {
    policy.target_mri_shape = Shape(parse_extents(o.target_shape));
  }
  policy.validate();
  if (o.workers < 1) throw ConfigError("--workers must be >= 1");
  const Manifest manifest = read_manifest(o.manifest);
  const LabelSet set = manifest_label_set(manifest);
  LoadOptions load{false, false, o.workers};
  for (const ManifestRow& r : manifest.rows) {
    load.need_mri = load.need_mri || !r.mri_path.empty();
    load.need_fmri = load.need_fmri || !r.fmri_path.empty();
  }
  const auto subjects = load_dataset(manifest, parent_dir(o.manifest), load);
  make_dir(o.out);
  make_dir((fs::path(o.out) / "samples").string());

  const AugmentedDataset data = expand_dataset(subjects, policy, o.workers);
  Manifest out;
  out.standardized = true;
  for (const Sample& s : data.samples) {
    ManifestRow row{s.subject_id, "", "", decode_label(s.label, set)};
    if (s.mri) {
      row.mri_path = "samples/" + s.subject_id + "_mri.nft";
      save_tensor_file(*s.mri, (fs::path(o.out) / row.mri_path).string());
    }
    if (s.fmri) {
      row.fmri_path = "samples/" + s.subject_id + "_fmri.nft";
      save_tensor_file(*s.fmri, (fs::path(o.out) / row.fmri_path).string());
    }
    out.rows.push_back(std::move(row));
  }
  write_manifest(out, (fs::path(o.out) / "manifest.tsv").string());
  write_provenance(data.provenance, (fs::path(o.out) / "provenance.tsv").string());
  std::printf("expanded %zu subjects to %zu samples in %s\n", subjects.size(), data.samples.size(), o.out.c_str());
}

void run_train(const TrainOptions& o) {
  ModelConfig config;
  config.architecture = parse_architecture(o.architecture);
  config.dropout_rate = o.dropout;
  config.seed = o.train.seed;
  o.train.validate();
  if (!(o.dropout >= 0.0f && o.dropout < 1.0f)) throw ConfigError("--dropout must be in [0, 1)");
  for (double f : {o.train_fraction, o.val_fraction, o.test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must be in [0, 1]");
  }
  if (!(o.train_fraction > 0.0)) throw ConfigError("--train-frac must be > 0");

  const Manifest manifest = read_manifest(o.manifest);
  const LabelSet set = manifest_label_set(manifest);
  config.num_classes = static_cast<std::size_t>(label_set_size(set));
  const bool mri = uses_mri(config.architecture), fmri = uses_fmri(config.architecture);
  auto samples = load_dataset(manifest, parent_dir(o.manifest), LoadOptions{mri, fmri, o.train.workers});
  require_uniform_shapes(samples, mri, fmri);
  if (mri) config.mri_shape = samples.front().mri->shape();
  if (fmri) config.fmri_shape = samples.front().fmri->shape();
  for (Sample& s : samples) {
    if (!mri) s.mri.reset();
    if (!fmri) s.fmri.reset();
  }
  config.validate();
  plan_architecture(config);

  std::vector<int> labels;
  for (const Sample& s : samples) labels.push_back(s.label);
  const std::string provenance_path =
      o.provenance.empty() ? (fs::path(parent_dir(o.manifest)) / "provenance.tsv").string() : o.provenance;
  Split split;
  if (o.split_before_augment && fs::exists(provenance_path)) {
    std::map<std::string, std::string> source;
    for (const ProvenanceRecord& r : read_provenance(provenance_path)) source[r.sample_id] = r.source_subject;
    std::vector<std::string> groups;
    for (const Sample& s : samples) {
      const auto it = source.find(s.subject_id);
      groups.push_back(it == source.end() ? s.subject_id : it->second);
    }
    split = grouped_stratified_split(labels, groups, o.train_fraction, o.val_fraction, o.test_fraction, o.train.seed);
  } else {
    split = stratified_split(labels, sizes_from_fractions(samples.size(), o.train_fraction, o.val_fraction, o.test_fraction),
                             o.train.seed);
  }
  if (split.train.empty()) throw ConfigError("training split is empty");

  make_dir(o.out);
  write_split(samples, split, (fs::path(o.out) / "split.tsv").string());
  Model model = build_model(config);
  std::printf("%s: %zu parameters, %zu train / %zu val / %zu test\n", architecture_name(config.architecture).c_str(),
              model.parameter_count(), split.train.size(), split.val.size(), split.test.size());
  const auto train_set = select(samples, split.train);
  const auto val_set = select(samples, split.val);
  const TrainResult result = train(model, train_set, val_set, o.train, [](const EpochRecord& e) {
    std::printf("epoch %3zu  loss %.5f  acc %.4f  val_loss %.5f  val_acc %.4f\n", e.epoch, e.train_loss,
                e.train_accuracy, e.val_loss, e.val_accuracy);
    std::fflush(stdout);
  });
  write_learning_curve(result.curve, (fs::path(o.out) / "curve.csv").string());
  save_checkpoint(model, (fs::path(o.out) / "checkpoint.nfse").string());
}

void run_eval(const EvalOptions& o) {
  if (o.workers < 1) throw ConfigError("--workers must be >= 1");
  if (o.subset != "all" && o.subset != "train" && o.subset != "val" && o.subset != "test") {
    throw ConfigError("--subset must be one of all, train, val, test");
  }
  const Model model = load_checkpoint(o.checkpoint);
  const Manifest manifest = read_manifest(o.manifest);
  const bool mri = uses_mri(model.config.architecture), fmri = uses_fmri(model.config.architecture);
  std::vector<Sample> samples = load_dataset(manifest, parent_dir(o.manifest), LoadOptions{mri, fmri, o.workers});
  if (samples.empty() || static_cast<std::size_t>(label_set_size(manifest_label_set(manifest))) != model.config.num_classes) {
    throw ConfigError("manifest label set does not match the checkpoint's class count");
  }
  if (o.subset != "all") {
    const std::string split_path =
        o.split.empty() ? (fs::path(parent_dir(o.checkpoint)) / "split.tsv").string() : o.split;
    const auto split = read_split(split_path);
    std::vector<Sample> kept;
    for (Sample& s : samples) {
      const auto it = split.find(s.subject_id);
      if (it != split.end() && it->second == o.subset) kept.push_back(std::move(s));
    }
    samples = std::move(kept);
    if (samples.empty()) throw ConfigError("no samples in subset '" + o.subset + "'");
  }
  for (Sample& s : samples) {
    if (!mri) s.mri.reset();
    if (!fmri) s.fmri.reset();
  }
  const EvalReport report = evaluate(model, samples, o.workers);
  make_dir(o.out);
  write_report(report, o.out);
  std::fputs(format_report(report).c_str(), stdout);
}

}  // namespace nf::cli
