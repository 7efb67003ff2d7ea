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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurofuse/models.hpp"
#include "neurofuse/sample.hpp"

namespace nf {

// counts[t][p]: rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::vector<std::vector<std::size_t>> counts;

  int num_classes() const { return static_cast<int>(counts.size()); }
  std::size_t total() const;
  std::size_t trace() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int num_classes);

struct ClassScores {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

// 0/0 ratios are reported as 0.
ClassScores prf_scores(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  int class_index = 0;
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auc = 0.0;
};

// One-vs-rest curve for class k from per-sample score vectors. Equal scores
// form a single threshold step. Throws DegenerateClassError when class k has
// no positives or no negatives.
RocCurve roc_auc(std::span<const int> truth, std::span<const std::vector<double>> scores, int k);

struct EvalReport {
  int num_classes = 0;
  std::vector<std::string> sample_ids;
  std::vector<int> truth;
  std::vector<int> predicted;
  std::vector<std::vector<double>> probabilities;
  double mean_loss = 0.0;
  ConfusionMatrix confusion;
  ClassScores scores;
  std::vector<std::optional<RocCurve>> roc;  // nullopt for degenerate classes

  // Mean AUC over classes with a defined curve; NaN if there are none.
  double macro_auc() const;
};

EvalReport evaluate(const Model& model, std::span<const Sample> samples, int workers = 1);

std::string format_report(const EvalReport& report);
std::string format_confusion_csv(const ConfusionMatrix& cm);
std::string format_scores_csv(const EvalReport& report);
std::string format_roc_csv(const std::optional<RocCurve>& roc);

// Writes summary.txt, cm.csv, scores.csv and roc_class<k>.csv into dir.
void write_report(const EvalReport& report, const std::string& dir);

}  // namespace nf
