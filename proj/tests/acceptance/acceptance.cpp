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

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   neurofuse_acceptance --cli path/to/neurofuse [--only N]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "neurofuse/augmentation.hpp"
#include "neurofuse/data_io.hpp"
#include "neurofuse/errors.hpp"
#include "neurofuse/layers.hpp"
#include "neurofuse/metrics.hpp"
#include "neurofuse/models.hpp"
#include "neurofuse/training.hpp"
#include "nifti_bytes.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace {

using namespace nf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string g_cli;

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<Sample> standardized(std::vector<Sample> samples) {
  for (Sample& s : samples) {
    if (s.mri) s.mri = standardize_intensity(*s.mri);
    if (s.fmri) s.fmri = standardize_intensity(*s.fmri);
  }
  return samples;
}

ModelConfig desk_model(Architecture arch, std::uint64_t seed) {
  ModelConfig c;
  c.architecture = arch;
  c.mri_shape = Shape{16, 16, 12, 1};
  c.fmri_shape = Shape{6, 8, 8, 4, 1};
  c.seed = seed;
  return c;
}

// --- 1 ------------------------------------------------------------------------

Outcome gradient_correctness() {
  using Suite = testing::GradientSuiteReport (*)(std::size_t, std::uint64_t, const testing::FdOptions&);
  const Suite suites[] = {testing::conv3d_gradient_suite,    testing::maxpool3d_gradient_suite,
                          testing::dense_gradient_suite,     testing::relu_gradient_suite,
                          testing::softmax_ce_gradient_suite, testing::dropout_gradient_suite,
                          testing::lstm_gradient_suite,      testing::gru_gradient_suite,
                          testing::time_distributed_gradient_suite};
  constexpr std::size_t kInstances = 20;
  const testing::FdOptions options;  // step 1e-2, float32
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (Suite suite : suites) {
    const auto r = suite(kInstances, 2024, options);
    // Kink exclusion may not hollow out a suite.
    const bool suite_ok = r.instances >= kInstances && r.stats.max_rel_error < 1e-3 && r.skipped_fraction() < 0.5;
    ok = ok && suite_ok;
    detail += fmt("%s%s %.1e (%zu/%zu)", detail.empty() ? "" : ", ", r.name.c_str(), r.stats.max_rel_error,
                  r.stats.checked, r.stats.checked + r.stats.skipped);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  return {ok, fmt("max rel err per layer [checked/total]: %s; %.1fs", detail.c_str(), secs)};
}

// --- 2 ------------------------------------------------------------------------

Outcome kernel_oracles() {
  Rng rng(7);
  double conv_err = 0.0, pool_err = 0.0, auc_err = 0.0;
  auto pick = [&](long long lo, long long hi) { return static_cast<std::size_t>(uniform_int(rng, lo, hi)); };
  for (int trial = 0; trial < 50; ++trial) {
    const Padding padding = trial % 2 ? Padding::kSame : Padding::kValid;
    const Extent3 k{2 * pick(0, 1) + 1, 2 * pick(0, 1) + 1, 2 * pick(0, 1) + 1};
    const Extent3 stride{pick(1, 2), pick(1, 2), pick(1, 2)};
    const std::size_t cin = pick(1, 3), cout = pick(1, 4);
    Conv3DLayer layer = Conv3DLayer::glorot(k, cin, cout, stride, padding, rng);
    layer.bias = testing::random_tensor(layer.bias.shape(), rng);
    const Tensor x = testing::random_tensor(Shape{pick(3, 7), pick(3, 7), pick(3, 7), cin}, rng);
    const Tensor y = conv3d_forward(layer, x).y;
    const Tensor ref = testing::naive_conv3d(x, layer.kernels, layer.bias, stride, padding);
    if (y.shape() != ref.shape()) return {false, "conv3d shape mismatch " + y.shape().to_string()};
    for (std::size_t i = 0; i < y.size(); ++i) conv_err = std::max(conv_err, double(std::abs(y[i] - ref[i])));

    MaxPool3DLayer pool;
    pool.window = {pick(1, 3), pick(1, 3), pick(1, 3)};
    pool.stride = {pick(1, 3), pick(1, 3), pick(1, 3)};
    const Tensor px = testing::random_tensor(Shape{pick(3, 8), pick(3, 8), pick(3, 8), pick(1, 3)}, rng);
    const Tensor py = maxpool3d_forward(pool, px).y;
    const Tensor pref = testing::naive_maxpool3d(px, pool.window, pool.stride);
    if (py.shape() != pref.shape()) return {false, "maxpool shape mismatch " + py.shape().to_string()};
    for (std::size_t i = 0; i < py.size(); ++i) pool_err = std::max(pool_err, double(std::abs(py[i] - pref[i])));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = pick(10, 200);
    std::vector<int> truth(n);
    std::vector<std::vector<double>> scores(n, std::vector<double>(3));
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(i < 3 ? i : pick(0, 2));
      for (double& v : scores[i]) v = trial % 2 ? uniform(rng, 0.0, 1.0) : static_cast<double>(pick(0, 10)) / 10.0;
    }
    const int k = static_cast<int>(trial % 3);
    auc_err = std::max(auc_err, std::abs(roc_auc(truth, scores, k).auc - testing::pairwise_auc(truth, scores, k)));
  }
  const bool ok = conv_err < 1e-5 && pool_err < 1e-5 && auc_err < 1e-9;
  return {ok, fmt("conv3d max abs err %.2e, maxpool3d %.2e (50 instances each); AUC vs pairwise %.2e (100 instances)",
                  conv_err, pool_err, auc_err)};
}

// --- 3 ------------------------------------------------------------------------

Outcome shape_audit() {
  ModelConfig c;
  c.architecture = Architecture::kMultimodalCnnLstm;
  c.mri_shape = Shape{128, 128, 176, 1};
  c.fmri_shape = Shape{216, 64, 64, 32, 1};
  const ArchitecturePlan p = plan_architecture(c);
  const bool ok = p.mri_features == 128 && p.fmri_features == 32 && p.fusion_input == 160 && p.num_classes == 3;
  return {ok, fmt("v_MRI %zu, v_fMRI %zu, fusion input %zu, output %zu, %zu parameters (no activations allocated)",
                  p.mri_features, p.fmri_features, p.fusion_input, p.num_classes, p.parameter_count)};
}

// --- 4 ------------------------------------------------------------------------

Outcome overfit_capacity() {
  const auto data = standardized(generate_synthetic_dataset(2, SyntheticShapes{}, 11));
  bool ok = true;
  std::string detail;
  const auto t0 = Clock::now();
  for (Architecture arch : {Architecture::kMultimodalCnnLstm, Architecture::kMultimodalCnnGru}) {
    Model m = build_model(desk_model(arch, 1));
    TrainConfig tc;
    tc.epochs = 200;
    tc.learning_rate = 1e-3f;
    std::size_t first_perfect = 0;
    train(m, data, {}, tc, [&](const EpochRecord& e) {
      if (first_perfect == 0 && e.train_accuracy == 1.0) first_perfect = e.epoch;
    });
    const double final_acc = evaluate_loss_accuracy(m, data).accuracy;
    ok = ok && first_perfect > 0 && final_acc == 1.0;
    detail += fmt("%s%s 100%% at epoch %zu (final %.2f)", detail.empty() ? "" : ", ",
                  architecture_name(arch).c_str(), first_perfect, final_acc);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300.0;
  return {ok, detail + fmt("; %.1fs", secs)};
}

// --- 5 ------------------------------------------------------------------------

Outcome augmentation_bookkeeping() {
  testing::TempDir dir;
  if (run_cli("synth --per-class 10 --mri-shape 8x8x6 --fmri-shape 3x4x4x2 --seed 2 --out " + dir.file("d")) != 0) {
    return {false, "synth failed"};
  }
  Manifest m = read_manifest(dir.file("d/manifest.tsv"));
  m.rows.pop_back();  // 29 subjects
  write_manifest(m, dir.file("d/m29.tsv"));
  if (run_cli("augment --manifest " + dir.file("d/m29.tsv") + " --copies 10 --target-shape keep --shift 1 1 1 " +
              "--motion-shift 1 --seed 3 --out " + dir.file("a")) != 0) {
    return {false, "augment failed"};
  }
  const Manifest out = read_manifest(dir.file("a/manifest.tsv"));
  std::vector<int> labels;
  for (const auto& r : out.rows) labels.push_back(encode_label(r.label_text));
  const SplitSizes sizes = sizes_from_fractions(labels.size(), 0.7, 0.2, 0.1);
  const Split split = stratified_split(labels, sizes, 17);

  std::set<std::size_t> seen;
  bool disjoint = true;
  double worst = 0.0;
  std::map<int, double> class_total;
  for (int l : labels) class_total[l] += 1.0;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    std::map<int, double> in_part;
    for (std::size_t i : *part) {
      disjoint = disjoint && seen.insert(i).second;
      in_part[labels[i]] += 1.0;
    }
    for (const auto& [l, total] : class_total) {
      const double share = total * static_cast<double>(part->size()) / static_cast<double>(labels.size());
      worst = std::max(worst, std::abs(in_part[l] - share));
    }
  }
  const bool ok = out.rows.size() == 319 && split.train.size() == 223 && split.val.size() == 64 &&
                  split.test.size() == 32 && disjoint && seen.size() == 319 && worst <= 1.0;
  return {ok, fmt("%zu samples from 29 subjects; split %zu/%zu/%zu, disjoint cover %s, max class deviation %.2f",
                  out.rows.size(), split.train.size(), split.val.size(), split.test.size(),
                  disjoint && seen.size() == 319 ? "yes" : "no", worst)};
}

// --- 6 ------------------------------------------------------------------------

AugmentationPolicy desk_policy(std::uint64_t seed) {
  // Defaults scaled to a 16x16x12 grid: +-8 voxels would move content off it.
  AugmentationPolicy p;
  p.target_mri_shape.reset();
  p.shift_max_voxels = {2, 2, 2};
  p.temporal_shift_max_frames = 1;
  p.motion_shift_max_voxels = 1;
  p.copies_per_subject = 10;
  p.seed = seed;
  return p;
}

AugmentationPolicy held_out_pose() {
  AugmentationPolicy p = AugmentationPolicy::identity();
  p.rotation_max_degrees = {10.0, 10.0, 10.0};
  p.shift_max_voxels = {2, 2, 2};
  p.temporal_shift_max_frames = 1;
  return p;
}

Outcome augmentation_effect() {
  constexpr int kSeeds = 5;
  double with_sum = 0.0, without_sum = 0.0;
  std::string per_seed;
  for (int seed = 0; seed < kSeeds; ++seed) {
    // 12 subjects, 4 per class: the first two of each class train, the rest are held out.
    const auto subjects = standardized(generate_synthetic_dataset(4, SyntheticShapes{}, 500 + seed));
    std::vector<Sample> train_subjects, test_subjects;
    for (std::size_t i = 0; i < subjects.size(); ++i) (i % 4 < 2 ? train_subjects : test_subjects).push_back(subjects[i]);
    // Held-out subjects sit in the scanner slightly differently from the training ones.
    Rng pose_rng(derive_seed({900, static_cast<std::uint64_t>(seed)}));
    const AugmentationPolicy pose = held_out_pose();
    for (Sample& s : test_subjects) {
      s.mri = augment_mri(*s.mri, pose, pose_rng);
      s.fmri = augment_fmri(*s.fmri, pose, pose_rng);
    }
    const auto augmented = expand_dataset(train_subjects, desk_policy(seed)).samples;

    TrainConfig tc;
    tc.epochs = 20;
    tc.learning_rate = 1e-4f;
    tc.seed = static_cast<std::uint64_t>(seed);
    double acc[2];
    for (int variant = 0; variant < 2; ++variant) {
      Model m = build_model(desk_model(Architecture::kMultimodalCnnLstm, static_cast<std::uint64_t>(seed)));
      train(m, variant ? std::span<const Sample>(augmented) : std::span<const Sample>(train_subjects), {}, tc);
      acc[variant] = evaluate(m, test_subjects).scores.accuracy;
    }
    without_sum += acc[0];
    with_sum += acc[1];
    per_seed += fmt("%s%.2f/%.2f", per_seed.empty() ? "" : " ", acc[1], acc[0]);
  }
  const double with_mean = with_sum / kSeeds, without_mean = without_sum / kSeeds;
  return {with_mean >= without_mean, fmt("mean held-out accuracy with augmentation %.3f vs without %.3f "
                                         "(per seed with/without: %s)",
                                         with_mean, without_mean, per_seed.c_str())};
}

// --- 7 ------------------------------------------------------------------------

Outcome nifti_round_trip() {
  testing::TempDir dir;
  Rng rng(31);
  std::size_t exact = 0, rank4 = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::size_t> dims;
    if (i % 2) {
      dims.push_back(static_cast<std::size_t>(uniform_int(rng, 1, 6)));
      ++rank4;
    }
    for (int a = 0; a < 3; ++a) dims.push_back(static_cast<std::size_t>(uniform_int(rng, 1, 9)));
    dims.push_back(1);
    Tensor x = testing::random_tensor(Shape(dims), rng, -1e4, 1e4);
    if (i % 10 == 3) x[0] = 1e-42f;  // subnormal
    write_nifti(x, dir.file("v.nii"));
    const Tensor y = read_nifti(dir.file("v.nii"));
    bool same = y.shape() == x.shape();
    for (std::size_t j = 0; same && j < x.size(); ++j) same = std::memcmp(x.data() + j, y.data() + j, sizeof(float)) == 0;
    exact += same;
  }

  testing::RawNifti le(false), be(true);
  for (testing::RawNifti* r : {&le, &be}) {
    r->dims({7, 5, 3, 4});
    r->datatype(kNiftiInt16, 16);
    r->scaling(0.5f, 10.0f);
  }
  const std::int16_t voxels[7 * 5 * 3 * 4] = {1, -2, 300, -400};
  le.append(voxels, std::size(voxels), 2);
  be.append(voxels, std::size(voxels), 2);
  le.save(dir.file("le.nii"));
  be.save(dir.file("be.nii"));
  const bool header_same = read_nifti_header(dir.file("le.nii")) == read_nifti_header(dir.file("be.nii"));
  const Tensor a = read_nifti(dir.file("le.nii")), b = read_nifti(dir.file("be.nii"));
  bool data_same = a.shape() == b.shape() && a.shape() == Shape{4, 7, 5, 3, 1};
  for (std::size_t j = 0; data_same && j < a.size(); ++j) data_same = a[j] == b[j];
  data_same = data_same && a[2 * 15] == 160.0f;  // disk voxel 2 is (x=2,y=0,z=0): 0.5*300+10

  const bool ok = exact == 100 && header_same && data_same;
  return {ok, fmt("%zu/100 bit-exact (%zu rank-4); byte-swapped header %s, voxels %s", exact, rank4,
                  header_same ? "identical" : "DIFFERENT", data_same ? "identical" : "DIFFERENT")};
}

// --- 8 ------------------------------------------------------------------------

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::set<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) names.insert(fs::relative(e.path(), a).string());
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  if (other != names.size()) return false;
  files = names.size();
  for (const auto& n : names)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

Outcome determinism() {
  testing::TempDir dir;
  if (run_cli("synth --per-class 2 --seed 5 --out " + dir.file("d")) != 0) return {false, "synth failed"};
  const std::string train = "train --manifest " + dir.file("d/manifest.tsv") + " --epochs 5 --lr 1e-3 --seed 9 ";
  if (run_cli(train + "--out " + dir.file("r1")) != 0 || run_cli(train + "--out " + dir.file("r2")) != 0) {
    return {false, "train failed"};
  }
  const bool curve = slurp(dir.file("r1/curve.csv")) == slurp(dir.file("r2/curve.csv"));
  const bool ckpt = slurp(dir.file("r1/checkpoint.nfse")) == slurp(dir.file("r2/checkpoint.nfse"));

  const std::string aug = "augment --manifest " + dir.file("d/manifest.tsv") +
                          " --copies 4 --target-shape keep --shift 1 1 1 --motion-probability 0.5 --seed 4 ";
  if (run_cli(aug + "--workers 1 --out " + dir.file("a1")) != 0 || run_cli(aug + "--workers 4 --out " + dir.file("a4")) != 0) {
    return {false, "augment failed"};
  }
  std::size_t files = 0;
  const bool augment_same = same_tree(dir.file("a1"), dir.file("a4"), files);
  return {curve && ckpt && augment_same,
          fmt("curve.csv %s, checkpoint %s across two train runs; augment --workers 1 vs 4: %zu files %s",
              curve ? "identical" : "DIFFERENT", ckpt ? "identical" : "DIFFERENT", files,
              augment_same ? "identical" : "DIFFERENT")};
}

// --- 9 ------------------------------------------------------------------------

Outcome metric_closed_forms() {
  const double uniform_ce = sparse_ce_loss(tensor_new(Shape{3}, 1.0f / 3.0f), 0);
  const double ce_err = std::abs(uniform_ce - std::log(3.0));

  const std::vector<int> truth{0, 1, 2, 0, 1, 2, 2, 0};
  std::vector<std::vector<double>> perfect;
  for (int t : truth) {
    std::vector<double> row(3, 0.0);
    row[static_cast<std::size_t>(t)] = 1.0;
    perfect.push_back(row);
  }
  const ClassScores s = prf_scores(confusion_matrix(truth, truth, 3));
  bool perfect_ok = s.accuracy == 1.0;
  double min_auc = 1.0;
  for (int k = 0; k < 3; ++k) {
    perfect_ok = perfect_ok && s.f1[k] == 1.0;
    min_auc = std::min(min_auc, roc_auc(truth, perfect, k).auc);
  }
  perfect_ok = perfect_ok && min_auc == 1.0;

  const std::vector<std::vector<double>> constant(truth.size(), std::vector<double>(3, 0.2));
  double const_err = 0.0;
  for (int k = 0; k < 3; ++k) const_err = std::max(const_err, std::abs(roc_auc(truth, constant, k).auc - 0.5));

  const bool ok = ce_err <= 1e-6 && perfect_ok && const_err <= 1e-9;
  return {ok, fmt("uniform CE - ln 3 = %.1e; perfect predictor acc %.0f, min F1 %.0f, min AUC %.0f; "
                  "constant scorer |AUC - 0.5| = %.1e",
                  ce_err, s.accuracy, *std::min_element(s.f1.begin(), s.f1.end()), min_auc, const_err)};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) g_cli = argv[++i];
    else if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  if (g_cli.empty() || !fs::exists(g_cli)) {
    std::fprintf(stderr, "usage: %s --cli path/to/neurofuse [--only N]\n", argv[0]);
    return 2;
  }

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient correctness", gradient_correctness},
      {"kernel oracles", kernel_oracles},
      {"architecture shape audit", shape_audit},
      {"overfit capacity", overfit_capacity},
      {"augmentation bookkeeping", augmentation_bookkeeping},
      {"augmentation effect", augmentation_effect},
      {"NIfTI round-trip", nifti_round_trip},
      {"determinism", determinism},
      {"metrics closed forms", metric_closed_forms},
  };
  int failures = 0;
  for (int i = 0; i < 9; ++i) {
    if (only && only != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %s: %s | %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
