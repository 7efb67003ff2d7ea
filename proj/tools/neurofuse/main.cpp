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

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "neurofuse/errors.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Expands `--config FILE` into flags. Each `key = value` line becomes
// `--key value...` unless the command line already names that flag.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  auto named = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = line.substr(first, eq - first);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    if (named(flag)) continue;
    std::istringstream values(line.substr(eq + 1));
    std::vector<std::string> tokens{flag};
    for (std::string v; values >> v;) tokens.push_back(v);
    if (tokens.size() == 2 && (tokens[1] == "true" || tokens[1] == "false")) {
      args.push_back(flag + "=" + tokens[1]);
      continue;
    }
    args.insert(args.end(), tokens.begin(), tokens.end());
  }
  return args;
}

void add_common(CLI::App* cmd, std::string& out, int* workers) {
  cmd->add_option("--config", "flat `key = value` file; flags override its values");
  cmd->add_option("--out", out, "output directory")->required();
  if (workers) cmd->add_option("--workers", *workers, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurofuse: multimodal MRI + fMRI classification experiments"};
  app.require_subcommand(1);

  nf::cli::SynthOptions synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic NIfTI dataset and manifest");
  add_common(s, synth.out, nullptr);
  s->add_option("--per-class", synth.per_class, "subjects per class")->check(CLI::PositiveNumber);
  s->add_option("--classes", synth.num_classes, "3 (NCS/MCI/AD) or 4 (impairment grades)")->check(CLI::IsMember({3, 4}));
  s->add_option("--mri-shape", synth.mri_shape, "structural extents, e.g. 16x16x12");
  s->add_option("--fmri-shape", synth.fmri_shape, "functional extents T x d1 x d2 x d3, or none");
  s->add_option("--seed", synth.seed);

  nf::cli::AugmentOptions aug;
  nf::AugmentationPolicy& pol = aug.policy;
  CLI::App* a = app.add_subcommand("augment", "expand a manifest with augmented copies");
  add_common(a, aug.out, &aug.workers);
  a->add_option("--manifest", aug.manifest, "input manifest")->required();
  a->add_option("--copies", pol.copies_per_subject, "augmented copies per subject");
  a->add_option("--target-shape", aug.target_shape, "MRI resize target, or keep");
  a->add_option("--rotation", pol.rotation_max_degrees, "max rotation in degrees per axis");
  a->add_option("--shift", pol.shift_max_voxels, "max shift in voxels per axis");
  a->add_option("--intensity-low", pol.intensity_low);
  a->add_option("--intensity-high", pol.intensity_high);
  a->add_option("--noise-sigma", pol.noise_sigma);
  a->add_option("--temporal-shift", pol.temporal_shift_max_frames, "max circular frame shift");
  a->add_option("--motion-probability", pol.motion_artifact_probability);
  a->add_option("--motion-shift", pol.motion_shift_max_voxels, "max voxel offset of a motion spike");
  a->add_option("--seed", pol.seed);

  nf::cli::TrainOptions tr;
  double clip = 0.0;
  CLI::App* t = app.add_subcommand("train", "train a model and write checkpoint, curve and split");
  add_common(t, tr.out, &tr.train.workers);
  t->add_option("--manifest", tr.manifest, "training manifest")->required();
  t->add_option("--arch", tr.architecture, "mm-3dcnn-lstm, mm-3dcnn-gru, 3dlstm, 3dgru, 3dcnn or 2dcnn");
  t->add_option("--epochs", tr.train.epochs);
  t->add_option("--batch-size", tr.train.batch_size);
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate");
  CLI::Option* clip_opt = t->add_option("--clip", clip, "global gradient-norm clip");
  t->add_option("--dropout", tr.dropout);
  t->add_option("--seed", tr.train.seed);
  t->add_option("--train-frac", tr.train_fraction);
  t->add_option("--val-frac", tr.val_fraction);
  t->add_option("--test-frac", tr.test_fraction);
  t->add_flag("--split-before-augment,!--split-after-augment", tr.split_before_augment,
              "keep all copies of a subject in one split (default on)");
  t->add_option("--provenance", tr.provenance, "provenance file used to group copies");

  nf::cli::EvalOptions ev;
  CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint and write report files");
  add_common(e, ev.out, &ev.workers);
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--split", ev.split, "split file written by train");
  e->add_option("--subset", ev.subset, "all, train, val or test");
  e->add_option("--seed", ev.seed, "unused; evaluation is deterministic");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*s) nf::cli::run_synth(synth);
    if (*a) nf::cli::run_augment(aug);
    if (*t) {
      if (clip_opt->count() > 0) tr.train.gradient_clip_norm = clip;
      nf::cli::run_train(tr);
    }
    if (*e) nf::cli::run_eval(ev);
  } catch (const nf::ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitUsage;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitRuntime;
  }
  return 0;
}
