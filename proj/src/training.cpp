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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "neurofuse/parallel.hpp"
#include "neurofuse/random.hpp"

namespace nf {

void adam_update(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam_update: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_update: optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!(params[k]->shape() == grads[k].shape()) || !(state.m[k].shape() == grads[k].shape())) {
      throw ShapeError("adam_update: shape mismatch at parameter " + std::to_string(k) + ": " +
                       params[k]->shape().to_string() + " vs " + grads[k].shape().to_string());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double lr = state.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    float* theta = params[k]->data();
    float* m = state.m[k].data();
    float* v = state.v[k].data();
    const float* g = grads[k].data();
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      theta[i] = static_cast<float>(theta[i] - lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

double sparse_ce_loss(const Tensor& probabilities, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) {
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probabilities.size()) + " classes");
  }
  return -std::log(std::max(static_cast<double>(probabilities[static_cast<std::size_t>(label)]), kLogFloor));
}

// --- Splitting ---------------------------------------------------------------

SplitSizes sizes_from_fractions(std::size_t n, double train, double val, double test) {
  const double total = train + val + test;
  if (!(train >= 0 && val >= 0 && test >= 0) || total <= 0) throw ConfigError("split fractions must be >= 0");
  const std::array<double, 3> share{n * train / total, n * val / total, n * test / total};
  std::array<std::size_t, 3> out{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    out[s] = static_cast<std::size_t>(std::floor(share[s]));
    assigned += out[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return share[a] - std::floor(share[a]) > share[b] - std::floor(share[b]);
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++out[order[i % 3]];
  return {out[0], out[1], out[2]};
}

namespace {

// Integer class x split counts with row sums = class counts, column sums =
// split sizes, and every cell within one of its proportional share. The
// fractional table is a feasible point of this transportation polytope, so an
// integral solution exists; max-flow on the residual 0/1 problem finds it.
std::vector<std::array<std::size_t, 3>> apportion(const std::vector<std::size_t>& class_counts,
                                                  const std::array<std::size_t, 3>& split_sizes) {
  const std::size_t k = class_counts.size();
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  std::vector<std::array<std::size_t, 3>> cells(k);
  std::vector<std::array<bool, 3>> fractional(k);
  std::vector<std::size_t> row_need(k);
  std::array<long long, 3> col_need{};
  for (std::size_t s = 0; s < 3; ++s) col_need[s] = static_cast<long long>(split_sizes[s]);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t used = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      // Exact rational arithmetic: share = count * size / n.
      const std::size_t num = class_counts[c] * split_sizes[s];
      const std::size_t den = static_cast<std::size_t>(n);
      cells[c][s] = num / den;
      fractional[c][s] = num % den != 0;
      used += cells[c][s];
      col_need[s] -= static_cast<long long>(cells[c][s]);
    }
    row_need[c] = class_counts[c] - used;
  }
  // Max flow: source -> class (row need) -> split (1 where fractional) -> sink (column need).
  const std::size_t nodes = k + 5;
  const std::size_t source = 0, sink = nodes - 1;
  auto class_node = [](std::size_t c) { return 1 + c; };
  auto split_node = [k](std::size_t s) { return 1 + k + s; };
  std::vector<std::vector<long long>> cap(nodes, std::vector<long long>(nodes, 0));
  for (std::size_t c = 0; c < k; ++c) {
    cap[source][class_node(c)] = static_cast<long long>(row_need[c]);
    for (std::size_t s = 0; s < 3; ++s)
      if (fractional[c][s]) cap[class_node(c)][split_node(s)] = 1;
  }
  for (std::size_t s = 0; s < 3; ++s) cap[split_node(s)][sink] = std::max(col_need[s], 0LL);
  const auto original = cap;
  std::size_t needed = std::accumulate(row_need.begin(), row_need.end(), std::size_t{0});
  while (needed > 0) {
    std::vector<long long> prev(nodes, -1);
    prev[source] = static_cast<long long>(source);
    std::vector<std::size_t> queue{source};
    for (std::size_t qi = 0; qi < queue.size() && prev[sink] < 0; ++qi) {
      const std::size_t u = queue[qi];
      for (std::size_t w = 0; w < nodes; ++w) {
        if (prev[w] < 0 && cap[u][w] > 0) {
          prev[w] = static_cast<long long>(u);
          queue.push_back(w);
        }
      }
    }
    if (prev[sink] < 0) throw ConfigError("stratified split: no consistent apportionment");
    for (std::size_t w = sink; w != source; w = static_cast<std::size_t>(prev[w])) {
      const auto u = static_cast<std::size_t>(prev[w]);
      --cap[u][w];
      ++cap[w][u];
    }
    --needed;
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t s = 0; s < 3; ++s)
      if (original[class_node(c)][split_node(s)] == 1 && cap[class_node(c)][split_node(s)] == 0) ++cells[c][s];
  return cells;
}

}  // namespace

Split stratified_split(std::span<const int> labels, SplitSizes sizes, std::uint64_t seed) {
  if (sizes.total() != labels.size()) {
    throw ConfigError("split sizes " + std::to_string(sizes.train) + "+" + std::to_string(sizes.val) + "+" +
                      std::to_string(sizes.test) + " do not sum to " + std::to_string(labels.size()) + " samples");
  }
  Split split;
  if (labels.empty()) return split;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> counts;
  for (const auto& [label, idx] : by_class) counts.push_back(idx.size());
  const auto cells = apportion(counts, {sizes.train, sizes.val, sizes.test});

  std::size_t c = 0;
  for (auto& [label, idx] : by_class) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(label) + 0x10000ull}));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto it = idx.begin();
    auto take = [&](std::vector<std::size_t>& into, std::size_t n) {
      into.insert(into.end(), it, it + static_cast<std::ptrdiff_t>(n));
      it += static_cast<std::ptrdiff_t>(n);
    };
    take(split.train, cells[c][0]);
    take(split.val, cells[c][1]);
    take(split.test, cells[c][2]);
    ++c;
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Split grouped_stratified_split(std::span<const int> labels, std::span<const std::string> groups,
                               double train_fraction, double val_fraction, double test_fraction,
                               std::uint64_t seed) {
  if (labels.size() != groups.size()) throw ConfigError("grouped split: labels and groups differ in length");
  std::vector<std::string> names;
  std::map<std::string, std::size_t> group_index;
  std::vector<int> group_labels;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = group_index.emplace(groups[i], names.size());
    if (inserted) {
      names.push_back(groups[i]);
      group_labels.push_back(labels[i]);
      members.emplace_back();
    } else if (group_labels[it->second] != labels[i]) {
      throw ConfigError("group '" + groups[i] + "' mixes labels");
    }
    members[it->second].push_back(i);
  }
  const SplitSizes sizes = sizes_from_fractions(names.size(), train_fraction, val_fraction, test_fraction);
  const Split by_group = stratified_split(group_labels, sizes, seed);
  Split out;
  auto expand = [&](const std::vector<std::size_t>& gs, std::vector<std::size_t>& into) {
    for (std::size_t g : gs) into.insert(into.end(), members[g].begin(), members[g].end());
    std::sort(into.begin(), into.end());
  };
  expand(by_group.train, out.train);
  expand(by_group.val, out.val);
  expand(by_group.test, out.test);
  return out;
}

// --- Training ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (gradient_clip_norm && !(*gradient_clip_norm > 0.0)) throw ConfigError("gradient clip norm must be > 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

LossAccuracy evaluate_loss_accuracy(const Model& model, std::span<const Sample> samples, int workers) {
  if (samples.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  std::vector<double> losses(samples.size());
  std::vector<int> correct(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const ModelForward out = model_forward(model, samples[i], false);
    losses[i] = sparse_ce_loss(out.prediction.probabilities, samples[i].label);
    correct[i] = static_cast<int>(out.prediction.predicted_class) == samples[i].label;
  });
  double loss = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    loss += losses[i];
    acc += correct[i];
  }
  const double n = static_cast<double>(samples.size());
  return {loss / n, acc / n};
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double total = 0.0;
  for (const Tensor& g : grads) total += squared_norm(g);
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const float factor = static_cast<float>(max_norm / norm);
    for (Tensor& g : grads) g = scale(g, factor);
  }
  return norm;
}

namespace {

[[noreturn]] void rethrow_with_sample(const Error& e, std::size_t index, const Sample& s) {
  const std::string msg = "sample " + std::to_string(index) + " (" + s.subject_id + "): " + e.what();
  if (dynamic_cast<const ShapeError*>(&e)) throw ShapeError(msg);
  if (dynamic_cast<const LabelError*>(&e)) throw LabelError(msg);
  throw Error(msg);
}

}  // namespace

TrainResult train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  TrainResult result;
  result.optimizer.learning_rate = config.learning_rate;
  const std::vector<Tensor*> params = model.parameters();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed({config.seed, 0x73687566ull, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<Gradients> per_sample(count);
      parallel_for(count, config.workers, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        const Sample& s = train_set[idx];
        try {
          const ModelForward fwd = model_forward(model, s, true, derive_seed({config.seed, epoch, idx}));
          per_sample[b] = model_backward(model, fwd.cache, s.label);
        } catch (const Error& e) {
          rethrow_with_sample(e, idx, s);
        }
      });
      Gradients total = std::move(per_sample[0]);
      for (std::size_t b = 1; b < count; ++b)
        for (std::size_t k = 0; k < total.size(); ++k) total[k] = add(total[k], per_sample[b][k]);
      if (count > 1) {
        const float inv = 1.0f / static_cast<float>(count);
        for (Tensor& g : total) g = scale(g, inv);
      }
      if (config.gradient_clip_norm) clip_global_norm(total, *config.gradient_clip_norm);
      adam_update(result.optimizer, params, total);
    }

    const LossAccuracy tr = evaluate_loss_accuracy(model, train_set, config.workers);
    const LossAccuracy va = evaluate_loss_accuracy(model, val_set, config.workers);
    result.curve.push_back({epoch, tr.loss, tr.accuracy, va.loss, va.accuracy});
    if (on_epoch) on_epoch(result.curve.back());
  }
  return result;
}

std::string format_learning_curve(const LearningCurve& curve) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const EpochRecord& r : curve) {
    std::snprintf(line, sizeof line, "%zu,%.6g,%.6g,%.6g,%.6g\n", r.epoch, r.train_loss, r.train_accuracy,
                  r.val_loss, r.val_accuracy);
    out += line;
  }
  return out;
}

void write_learning_curve(const LearningCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << format_learning_curve(curve);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace nf
