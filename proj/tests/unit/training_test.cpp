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

#include "neurofuse/training.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "gradcheck.hpp"
#include "neurofuse/data_io.hpp"
#include "neurofuse/errors.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace nf {
namespace {

using testing::random_tensor;

std::vector<float> adam_scalar_run(float theta0, float lr, std::span<const float> grads) {
  AdamState state;
  state.learning_rate = lr;
  Tensor theta(Shape{1}, {theta0});
  Tensor* params[] = {&theta};
  std::vector<float> out;
  for (float g : grads) {
    const Tensor grad[] = {Tensor(Shape{1}, {g})};
    adam_update(state, params, grad);
    out.push_back(theta[0]);
  }
  EXPECT_EQ(state.step, grads.size());
  return out;
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  AdamState state;
  Rng rng(1);
  Tensor a = random_tensor(Shape{3, 2}, rng);
  const Tensor before = a;
  Tensor* params[] = {&a};
  const Tensor grads[] = {Tensor(Shape{3, 2})};
  adam_update(state, params, grads);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], before[i]);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  const float g[] = {4.0f};
  const auto theta = adam_scalar_run(1.0f, 0.1f, g);
  EXPECT_NEAR(theta[0], 0.9, 1e-6);
}

TEST(AdamTest, MatchesScalarReferences) {
  const float constant[] = {0.5f, 0.5f, 0.5f, 0.5f, 0.5f};
  const auto a = adam_scalar_run(1.0f, 0.01f, constant);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(a[t], testing::scalar::kAdamConstant[t], 1e-6);
  const float varying[] = {0.3f, -1.2f, 2.0f, 0.05f, -0.4f};
  const auto b = adam_scalar_run(0.2f, 0.05f, varying);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(b[t], testing::scalar::kAdamVarying[t], 1e-6);
}

TEST(AdamTest, EarlyStepsAreBoundedByLearningRate) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    AdamState state;
    state.learning_rate = 0.01f;
    Tensor p = random_tensor(Shape{50}, rng);
    Tensor* params[] = {&p};
    for (int step = 0; step < 3; ++step) {
      const Tensor before = p;
      const Tensor grads[] = {random_tensor(p.shape(), rng, -5.0, 5.0)};
      adam_update(state, params, grads);
      for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(std::abs(p[i] - before[i]), 0.01 * 1.01);
    }
  }
}

TEST(AdamTest, ShapeMismatchThrows) {
  AdamState state;
  Tensor a(Shape{2});
  Tensor* params[] = {&a};
  const Tensor grads[] = {Tensor(Shape{3})};
  EXPECT_THROW(adam_update(state, params, grads), ShapeError);
}

TEST(LossTest, ClosedForms) {
  EXPECT_EQ(sparse_ce_loss(Tensor(Shape{3}, {0, 1, 0}), 1), 0.0);
  EXPECT_NEAR(sparse_ce_loss(tensor_new(Shape{3}, 1.0f / 3.0f), 2), std::log(3.0), 1e-6);
  const double floored = sparse_ce_loss(Tensor(Shape{2}, {1e-20f, 1.0f}), 0);
  EXPECT_TRUE(std::isfinite(floored));
  EXPECT_NEAR(floored, -std::log(1e-12), 1e-9);
  EXPECT_THROW(sparse_ce_loss(Tensor(Shape{3}), 3), LabelError);
  EXPECT_THROW(sparse_ce_loss(Tensor(Shape{3}), -1), LabelError);
}

TEST(ClipTest, GlobalNorm) {
  std::vector<Tensor> g{Tensor(Shape{2}, {3, 0}), Tensor(Shape{1}, {4})};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g[0][0], 3.0f);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-6);
  EXPECT_NEAR(g[1][0], 0.8, 1e-6);
}

TEST(SplitSizesTest, SeventyTwentyTen) {
  const SplitSizes s = sizes_from_fractions(319, 0.7, 0.2, 0.1);
  EXPECT_EQ(s.train, 223u);
  EXPECT_EQ(s.val, 64u);
  EXPECT_EQ(s.test, 32u);
  EXPECT_EQ(sizes_from_fractions(6, 0.5, 0.3, 0.2).total(), 6u);
}

void expect_stratified(std::span<const int> labels, const Split& split, SplitSizes sizes) {
  ASSERT_EQ(split.train.size(), sizes.train);
  ASSERT_EQ(split.val.size(), sizes.val);
  ASSERT_EQ(split.test.size(), sizes.test);
  std::set<std::size_t> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    for (std::size_t i : *part) EXPECT_TRUE(seen.insert(i).second) << "index " << i << " repeated";
  }
  EXPECT_EQ(seen.size(), labels.size());
  std::map<int, double> class_count;
  for (int l : labels) class_count[l] += 1.0;
  const double n = static_cast<double>(labels.size());
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    std::map<int, double> in_part;
    for (std::size_t i : *part) in_part[labels[i]] += 1.0;
    for (const auto& [label, count] : class_count) {
      const double share = count * static_cast<double>(part->size()) / n;
      EXPECT_LE(std::abs(in_part[label] - share), 1.0 + 1e-9) << "class " << label;
    }
  }
}

TEST(StratifiedSplitTest, ThreeNineteenCoversAllIndices) {
  std::vector<int> labels;
  // 29 subjects x 11 samples over three classes.
  for (int s = 0; s < 29; ++s) {
    for (int c = 0; c < 11; ++c) labels.push_back(s < 10 ? 0 : (s < 20 ? 1 : 2));
  }
  const SplitSizes sizes{223, 64, 32};
  const Split split = stratified_split(labels, sizes, 4);
  expect_stratified(labels, split, sizes);
  const Split again = stratified_split(labels, sizes, 4);
  EXPECT_EQ(split.train, again.train);
  EXPECT_EQ(split.test, again.test);
  const Split other = stratified_split(labels, sizes, 5);
  EXPECT_NE(split.train, other.train);
}

TEST(StratifiedSplitTest, SixSamplesTrainGetsEveryClass) {
  const int labels[] = {0, 0, 1, 1, 2, 2};
  const Split split = stratified_split(labels, SplitSizes{3, 2, 1}, 9);
  std::set<int> train_classes;
  for (std::size_t i : split.train) train_classes.insert(labels[i]);
  EXPECT_EQ(train_classes.size(), 3u);
}

TEST(StratifiedSplitTest, RandomProblemsStayWithinOne) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 3, 80));
    const int classes = static_cast<int>(uniform_int(rng, 1, 5));
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(uniform_int(rng, 0, classes - 1));
    const std::size_t train = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(n)));
    const std::size_t val = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(n - train)));
    const SplitSizes sizes{train, val, n - train - val};
    expect_stratified(labels, stratified_split(labels, sizes, rng()), sizes);
  }
}

TEST(StratifiedSplitTest, SizesMustSum) {
  const int labels[] = {0, 1, 2};
  EXPECT_THROW(stratified_split(labels, SplitSizes{1, 1, 0}, 0), ConfigError);
}

TEST(GroupedSplitTest, GroupsNeverSpanSplits) {
  std::vector<int> labels;
  std::vector<std::string> groups;
  for (int s = 0; s < 12; ++s) {
    for (int c = 0; c < 11; ++c) {
      labels.push_back(s % 3);
      groups.push_back("sub-" + std::to_string(s));
    }
  }
  const Split split = grouped_stratified_split(labels, groups, 0.5, 0.25, 0.25, 3);
  std::map<std::string, int> where;
  int part_id = 0;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (std::size_t i : *part) {
      auto [it, inserted] = where.emplace(groups[i], part_id);
      EXPECT_EQ(it->second, part_id) << groups[i];
    }
    ++part_id;
  }
  EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), labels.size());
  EXPECT_EQ(split.test.size(), 3u * 11u);
  std::set<int> test_classes;
  for (std::size_t i : split.test) test_classes.insert(labels[i]);
  EXPECT_EQ(test_classes.size(), 3u);
}

class TrainLoopTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = generate_synthetic_dataset(2, SyntheticShapes{}, 21);
    for (Sample& s : data_) {
      s.mri = standardize_intensity(*s.mri);
      s.fmri = standardize_intensity(*s.fmri);
    }
    config_.mri_shape = Shape{16, 16, 12, 1};
    config_.fmri_shape = Shape{6, 8, 8, 4, 1};
    config_.seed = 3;
  }

  std::vector<Sample> data_;
  ModelConfig config_;
};

TEST_F(TrainLoopTest, ZeroLearningRateIsFlat) {
  Model m = build_model(config_);
  const Model before = m;
  TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 0.0f;
  const TrainResult r = train(m, data_, {}, tc);
  ASSERT_EQ(r.curve.size(), 3u);
  for (const EpochRecord& e : r.curve) {
    EXPECT_EQ(e.train_loss, r.curve[0].train_loss);
    EXPECT_TRUE(std::isnan(e.val_loss));
  }
  const auto pa = m.parameters();
  const auto pb = before.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i]->size(); ++j) ASSERT_EQ((*pa[i])[j], (*pb[i])[j]);
  }
}

TEST_F(TrainLoopTest, DeterministicAndWorkerIndependent) {
  TrainConfig tc;
  tc.epochs = 4;
  tc.learning_rate = 1e-3f;
  tc.seed = 11;
  Model a = build_model(config_);
  Model b = build_model(config_);
  Model c = build_model(config_);
  const TrainResult ra = train(a, data_, data_, tc);
  const TrainResult rb = train(b, data_, data_, tc);
  tc.workers = 3;
  const TrainResult rc = train(c, data_, data_, tc);
  EXPECT_EQ(format_learning_curve(ra.curve), format_learning_curve(rb.curve));
  EXPECT_EQ(format_learning_curve(ra.curve), format_learning_curve(rc.curve));
  const auto pa = a.parameters();
  const auto pc = c.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i]->size(); ++j) ASSERT_EQ((*pa[i])[j], (*pc[i])[j]);
  }
}

TEST_F(TrainLoopTest, SingleSampleLossDecreasesFromTheStart) {
  Model m = build_model(config_);
  const std::span<const Sample> one(data_.data(), 1);
  double previous = evaluate_loss_accuracy(m, one).loss;
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 1;
  tc.learning_rate = 1e-3f;
  train(m, one, {}, tc, [&](const EpochRecord& e) {
    EXPECT_LT(e.train_loss, previous) << "epoch " << e.epoch;
    previous = e.train_loss;
  });
}

TEST_F(TrainLoopTest, ErrorsCarrySampleIndex) {
  Model m = build_model(config_);
  data_[3].fmri = Tensor(Shape{6, 8, 8, 3, 1});
  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(m, data_, {}, tc);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 3"), std::string::npos) << e.what();
  }
}

TEST_F(TrainLoopTest, ConfigValidation) {
  Model m = build_model(config_);
  TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(train(m, data_, {}, tc), ConfigError);
  tc.epochs = 1;
  tc.batch_size = 0;
  EXPECT_THROW(train(m, data_, {}, tc), ConfigError);
  tc.batch_size = 2;
  EXPECT_THROW(train(m, {}, {}, tc), ConfigError);
}

TEST(LearningCurveTest, Format) {
  const LearningCurve curve{{1, 1.0986122886, 0.3333333333, 1.2, 0.5}, {2, 0.5, 1.0, std::nan(""), std::nan("")}};
  const std::string text = format_learning_curve(curve);
  EXPECT_EQ(text,
            "epoch,train_loss,train_acc,val_loss,val_acc\n"
            "1,1.09861,0.333333,1.2,0.5\n"
            "2,0.5,1,nan,nan\n");
  testing::TempDir dir;
  write_learning_curve(curve, dir.file("curve.csv"));
  std::ifstream in(dir.file("curve.csv"));
  const std::string back((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(back, text);
}

}  // namespace
}  // namespace nf
