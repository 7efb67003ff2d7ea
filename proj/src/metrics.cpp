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

#include "neurofuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "neurofuse/errors.hpp"
#include "neurofuse/parallel.hpp"
#include "neurofuse/training.hpp"

namespace nf {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) n += counts[k][k];
  return n;
}

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
  if (truth.size() != predicted.size()) throw ShapeError("truth and prediction lists differ in length");
  const auto c = static_cast<std::size_t>(num_classes);
  ConfusionMatrix cm{std::vector<std::vector<std::size_t>>(c, std::vector<std::size_t>(c, 0))};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw LabelError("label out of range at index " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return cm;
}

ClassScores prf_scores(const ConfusionMatrix& cm) {
  const std::size_t c = cm.counts.size();
  ClassScores s;
  s.precision.resize(c);
  s.recall.resize(c);
  s.f1.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    const double tp = static_cast<double>(cm.counts[k][k]);
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row += static_cast<double>(cm.counts[k][j]);
      col += static_cast<double>(cm.counts[j][k]);
    }
    s.precision[k] = ratio(tp, col);
    s.recall[k] = ratio(tp, row);
    s.f1[k] = ratio(2.0 * s.precision[k] * s.recall[k], s.precision[k] + s.recall[k]);
  }
  if (c > 0) {
    s.macro_precision = std::accumulate(s.precision.begin(), s.precision.end(), 0.0) / static_cast<double>(c);
    s.macro_recall = std::accumulate(s.recall.begin(), s.recall.end(), 0.0) / static_cast<double>(c);
    s.macro_f1 = std::accumulate(s.f1.begin(), s.f1.end(), 0.0) / static_cast<double>(c);
  }
  s.accuracy = ratio(static_cast<double>(cm.trace()), static_cast<double>(cm.total()));
  return s;
}

RocCurve roc_auc(std::span<const int> truth, std::span<const std::vector<double>> scores, int k) {
  if (truth.size() != scores.size()) throw ShapeError("truth and score lists differ in length");
  std::vector<std::pair<double, bool>> items;
  items.reserve(truth.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (k < 0 || static_cast<std::size_t>(k) >= scores[i].size()) throw LabelError("class index out of range");
    const bool positive = truth[i] == k;
    pos += positive;
    items.emplace_back(scores[i][static_cast<std::size_t>(k)], positive);
  }
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DegenerateClassError("class " + std::to_string(k) + " has no " + (pos == 0 ? "positives" : "negatives"));
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve roc;
  roc.class_index = k;
  roc.points.push_back({0.0, 0.0});
  // Twice the area in units of (negative, positive) counts; exact in integers.
  std::uint64_t area2 = 0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::uint64_t dtp = 0;
    std::uint64_t dfp = 0;
    std::size_t j = i;
    for (; j < items.size() && items[j].first == items[i].first; ++j) {
      if (items[j].second) {
        ++dtp;
      } else {
        ++dfp;
      }
    }
    area2 += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
    i = j;
  }
  roc.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

double EvalReport::macro_auc() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : roc) {
    if (r) {
      sum += r->auc;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

EvalReport evaluate(const Model& model, std::span<const Sample> samples, int workers) {
  EvalReport report;
  report.num_classes = model.config.num_classes;
  const std::size_t n = samples.size();
  report.sample_ids.resize(n);
  report.truth.resize(n);
  report.predicted.resize(n);
  report.probabilities.resize(n);
  std::vector<double> losses(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const Sample& s = samples[i];
    ModelForward out = [&] {
      try {
        return model_forward(model, s, false);
      } catch (const ShapeError& e) {
        throw ShapeError("sample '" + s.subject_id + "': " + e.what());
      }
    }();
    report.sample_ids[i] = s.subject_id;
    report.truth[i] = s.label;
    report.predicted[i] = static_cast<int>(out.prediction.predicted_class);
    const auto p = out.prediction.probabilities.values();
    report.probabilities[i].assign(p.begin(), p.end());
    losses[i] = sparse_ce_loss(out.prediction.probabilities, s.label);
  });
  report.mean_loss = n == 0 ? std::numeric_limits<double>::quiet_NaN()
                            : std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n);
  report.confusion = confusion_matrix(report.truth, report.predicted, report.num_classes);
  report.scores = prf_scores(report.confusion);
  for (int k = 0; k < report.num_classes; ++k) {
    try {
      report.roc.emplace_back(roc_auc(report.truth, report.probabilities, k));
    } catch (const DegenerateClassError&) {
      report.roc.emplace_back(std::nullopt);
    }
  }
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  out += "samples: " + std::to_string(r.truth.size()) + "\n";
  out += "classes: " + std::to_string(r.num_classes) + "\n";
  out += "accuracy: " + fmt(r.scores.accuracy) + "\n";
  out += "mean loss: " + fmt(r.mean_loss) + "\n";
  out += "macro precision: " + fmt(r.scores.macro_precision) + "\n";
  out += "macro recall: " + fmt(r.scores.macro_recall) + "\n";
  out += "macro f1: " + fmt(r.scores.macro_f1) + "\n";
  out += "macro auc: " + fmt(r.macro_auc()) + "\n\n";
  out += "class  precision  recall    f1        auc\n";
  for (int k = 0; k < r.num_classes; ++k) {
    const auto i = static_cast<std::size_t>(k);
    char line[128];
    std::snprintf(line, sizeof line, "%-6d %-10s %-9s %-9s %s\n", k, fmt(r.scores.precision[i]).c_str(),
                  fmt(r.scores.recall[i]).c_str(), fmt(r.scores.f1[i]).c_str(),
                  r.roc[i] ? fmt(r.roc[i]->auc).c_str() : "n/a");
    out += line;
  }
  out += "\nconfusion matrix (rows true, columns predicted):\n";
  for (const auto& row : r.confusion.counts) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? " " : "") + std::to_string(row[j]);
    out += "\n";
  }
  return out;
}

std::string format_confusion_csv(const ConfusionMatrix& cm) {
  std::string out;
  for (const auto& row : cm.counts) {
    for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + std::to_string(row[j]);
    out += "\n";
  }
  return out;
}

std::string format_scores_csv(const EvalReport& r) {
  std::string out = "class,precision,recall,f1,auc\n";
  for (int k = 0; k < r.num_classes; ++k) {
    const auto i = static_cast<std::size_t>(k);
    out += std::to_string(k) + "," + fmt(r.scores.precision[i]) + "," + fmt(r.scores.recall[i]) + "," +
           fmt(r.scores.f1[i]) + "," + (r.roc[i] ? fmt(r.roc[i]->auc) : "nan") + "\n";
  }
  out += "macro," + fmt(r.scores.macro_precision) + "," + fmt(r.scores.macro_recall) + "," + fmt(r.scores.macro_f1) +
         "," + fmt(r.macro_auc()) + "\n";
  out += "accuracy," + fmt(r.scores.accuracy) + ",,,\n";
  return out;
}

std::string format_roc_csv(const std::optional<RocCurve>& roc) {
  std::string out = "fpr,tpr\n";
  if (!roc) return out;
  for (const RocPoint& p : roc->points) {
    char line[64];
    std::snprintf(line, sizeof line, "%.9g,%.9g\n", p.fpr, p.tpr);
    out += line;
  }
  return out;
}

void write_report(const EvalReport& r, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto put = [&](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
  };
  put("summary.txt", format_report(r));
  put("cm.csv", format_confusion_csv(r.confusion));
  put("scores.csv", format_scores_csv(r));
  for (int k = 0; k < r.num_classes; ++k) {
    put("roc_class" + std::to_string(k) + ".csv", format_roc_csv(r.roc[static_cast<std::size_t>(k)]));
  }
}

}  // namespace nf
