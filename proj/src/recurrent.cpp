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

#include "neurofuse/recurrent.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nf {

namespace {

float sigmoid(float a) { return 1.0f / (1.0f + std::exp(-a)); }

// out[j] += Σ_i x[i] · M[i, j]
void accumulate_vecmat(const Tensor& x, const Tensor& m, Tensor& out) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  const float* md = m.data();
  float* od = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const float xi = x[i];
    if (xi == 0.0f) continue;
    const float* mi = md + i * cols;
    for (std::size_t j = 0; j < cols; ++j) od[j] += xi * mi[j];
  }
}

// out[i] += Σ_j M[i, j] · d[j]
void accumulate_matvec(const Tensor& m, const Tensor& d, Tensor& out) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  const float* md = m.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const float* mi = md + i * cols;
    float acc = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) acc += mi[j] * d[j];
    out[i] += acc;
  }
}

// G[i, j] += a[i] · d[j]
void accumulate_outer(const Tensor& a, const Tensor& d, Tensor& g) {
  const std::size_t rows = g.shape()[0], cols = g.shape()[1];
  float* gd = g.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const float ai = a[i];
    if (ai == 0.0f) continue;
    float* gi = gd + i * cols;
    for (std::size_t j = 0; j < cols; ++j) gi[j] += ai * d[j];
  }
}

Tensor gate_preactivation(const Tensor& x, const Tensor& h, const Tensor& w, const Tensor& u, const Tensor& b) {
  Tensor a = b;
  accumulate_vecmat(x, w, a);
  accumulate_vecmat(h, u, a);
  return a;
}

void check_step_inputs(std::size_t input_size, std::size_t units, const Tensor& x, const RecurrentState& s,
                       bool with_cell, const char* who) {
  if (x.rank() != 1 || x.size() != input_size) {
    throw ShapeError(std::string(who) + ": input " + x.shape().to_string() + " does not match input_size " +
                     std::to_string(input_size));
  }
  if (s.h.rank() != 1 || s.h.size() != units || (with_cell && (s.c.rank() != 1 || s.c.size() != units))) {
    throw ShapeError(std::string(who) + ": state extents do not match units " + std::to_string(units));
  }
}

Tensor sequence_row(const Tensor& xs, std::size_t t) {
  const std::size_t n = xs.shape()[1];
  return Tensor(Shape{n}, std::vector<float>(xs.data() + t * n, xs.data() + (t + 1) * n));
}

void require_sequence(const Tensor& xs, std::size_t input_size, const char* who) {
  if (xs.empty()) throw EmptySequenceError(std::string(who) + ": empty input sequence");
  if (xs.rank() != 2 || xs.shape()[1] != input_size) {
    throw ShapeError(std::string(who) + " expects [T," + std::to_string(input_size) + "], got " +
                     xs.shape().to_string());
  }
}

Tensor output_gradient_at(const Tensor& d_out, std::size_t t, std::size_t steps, std::size_t units,
                          bool return_sequences) {
  if (return_sequences) return sequence_row(d_out, t);
  return t + 1 == steps ? d_out : Tensor(Shape{units});
}

void check_output_gradient(const Tensor& d_out, std::size_t steps, std::size_t units, bool return_sequences,
                           const char* who) {
  const Shape expected = return_sequences ? Shape{steps, units} : Shape{units};
  if (!(d_out.shape() == expected)) {
    throw ShapeError(std::string(who) + ": output gradient " + d_out.shape().to_string() + " != " +
                     expected.to_string());
  }
}

template <std::size_t G>
std::array<Tensor, G> filled(const Shape& s) {
  std::array<Tensor, G> out;
  for (auto& t : out) t = Tensor(s);
  return out;
}

}  // namespace

RecurrentState RecurrentState::zeros(std::size_t units, bool with_cell) {
  RecurrentState s;
  s.h = Tensor(Shape{units});
  if (with_cell) s.c = Tensor(Shape{units});
  return s;
}

// --- LSTM ------------------------------------------------------------------

LSTMLayer LSTMLayer::zeros(std::size_t input_size, std::size_t units, bool return_sequences) {
  if (input_size < 1 || units < 1) throw ShapeError("lstm input_size and units must be >= 1");
  LSTMLayer layer;
  layer.input_size = input_size;
  layer.units = units;
  layer.W = filled<4>(Shape{input_size, units});
  layer.U = filled<4>(Shape{units, units});
  layer.b = filled<4>(Shape{units});
  layer.return_sequences = return_sequences;
  return layer;
}

LSTMLayer LSTMLayer::glorot(std::size_t input_size, std::size_t units, bool return_sequences, Rng& rng) {
  LSTMLayer layer = zeros(input_size, units, return_sequences);
  for (std::size_t q = 0; q < 4; ++q) {
    layer.W[q] = glorot_uniform(layer.W[q].shape(), input_size, units, rng);
    layer.U[q] = glorot_uniform(layer.U[q].shape(), units, units, rng);
  }
  layer.b[kForgetGate] = Tensor(Shape{units}, 1.0f);
  return layer;
}

std::vector<Tensor*> LSTMLayer::parameters() {
  std::vector<Tensor*> p;
  for (auto& t : W) p.push_back(&t);
  for (auto& t : U) p.push_back(&t);
  for (auto& t : b) p.push_back(&t);
  return p;
}

std::vector<const Tensor*> LSTMLayer::parameters() const {
  std::vector<const Tensor*> p;
  for (const auto& t : W) p.push_back(&t);
  for (const auto& t : U) p.push_back(&t);
  for (const auto& t : b) p.push_back(&t);
  return p;
}

void LSTMGrads::add(const LSTMGrads& other) {
  for (std::size_t q = 0; q < 4; ++q) {
    dW[q] = nf::add(dW[q], other.dW[q]);
    dU[q] = nf::add(dU[q], other.dU[q]);
    db[q] = nf::add(db[q], other.db[q]);
  }
}

std::vector<Tensor> LSTMGrads::release() && {
  std::vector<Tensor> out;
  for (auto& t : dW) out.push_back(std::move(t));
  for (auto& t : dU) out.push_back(std::move(t));
  for (auto& t : db) out.push_back(std::move(t));
  return out;
}

namespace {

LSTMStepCache lstm_step_cached(const LSTMLayer& layer, const Tensor& x, const RecurrentState& state) {
  check_step_inputs(layer.input_size, layer.units, x, state, true, "lstm_step");
  LSTMStepCache s;
  s.x = x;
  s.h_prev = state.h;
  s.c_prev = state.c;
  s.i = gate_preactivation(x, state.h, layer.W[kInputGate], layer.U[kInputGate], layer.b[kInputGate]);
  s.f = gate_preactivation(x, state.h, layer.W[kForgetGate], layer.U[kForgetGate], layer.b[kForgetGate]);
  s.o = gate_preactivation(x, state.h, layer.W[kOutputGate], layer.U[kOutputGate], layer.b[kOutputGate]);
  s.g = gate_preactivation(x, state.h, layer.W[kCandidate], layer.U[kCandidate], layer.b[kCandidate]);
  s.c = Tensor(Shape{layer.units});
  s.tanh_c = Tensor(Shape{layer.units});
  for (std::size_t j = 0; j < layer.units; ++j) {
    s.i[j] = sigmoid(s.i[j]);
    s.f[j] = sigmoid(s.f[j]);
    s.o[j] = sigmoid(s.o[j]);
    s.g[j] = std::tanh(s.g[j]);
    s.c[j] = s.f[j] * state.c[j] + s.i[j] * s.g[j];
    s.tanh_c[j] = std::tanh(s.c[j]);
  }
  return s;
}

Tensor lstm_hidden(const LSTMStepCache& s) { return mul(s.o, s.tanh_c); }

}  // namespace

RecurrentState lstm_step(const LSTMLayer& layer, const Tensor& x_t, const RecurrentState& state) {
  LSTMStepCache s = lstm_step_cached(layer, x_t, state);
  return {lstm_hidden(s), std::move(s.c)};
}

Forward<LSTMCache> recurrent_forward(const LSTMLayer& layer, const Tensor& xs) {
  require_sequence(xs, layer.input_size, "lstm");
  const std::size_t steps = xs.shape()[0];
  LSTMCache cache;
  cache.steps.reserve(steps);
  RecurrentState state = RecurrentState::zeros(layer.units, true);
  std::vector<float> seq;
  for (std::size_t t = 0; t < steps; ++t) {
    LSTMStepCache s = lstm_step_cached(layer, sequence_row(xs, t), state);
    state.h = lstm_hidden(s);
    state.c = s.c;
    if (layer.return_sequences) seq.insert(seq.end(), state.h.values().begin(), state.h.values().end());
    cache.steps.push_back(std::move(s));
  }
  Tensor out = layer.return_sequences ? Tensor(Shape{steps, layer.units}, std::move(seq)) : state.h;
  check_finite(out, "lstm forward");
  return {std::move(out), std::move(cache)};
}

RecurrentBackward<LSTMGrads> recurrent_backward(const LSTMLayer& layer, const LSTMCache& cache,
                                                const Tensor& d_out) {
  const std::size_t steps = cache.steps.size();
  if (steps == 0) throw EmptySequenceError("lstm backward: empty cache");
  const std::size_t units = layer.units;
  check_output_gradient(d_out, steps, units, layer.return_sequences, "lstm backward");

  RecurrentBackward<LSTMGrads> result;
  result.dxs = Tensor(Shape{steps, layer.input_size});
  result.dparams.dW = filled<4>(Shape{layer.input_size, units});
  result.dparams.dU = filled<4>(Shape{units, units});
  result.dparams.db = filled<4>(Shape{units});

  Tensor dh_next(Shape{units});
  Tensor dc_next(Shape{units});
  std::array<Tensor, 4> da = filled<4>(Shape{units});
  for (std::size_t t = steps; t-- > 0;) {
    const LSTMStepCache& s = cache.steps[t];
    if (s.x.size() != layer.input_size || s.h_prev.size() != units) {
      throw ShapeError("lstm backward: cache does not match layer");
    }
    Tensor dh = add(output_gradient_at(d_out, t, steps, units, layer.return_sequences), dh_next);
    for (std::size_t j = 0; j < units; ++j) {
      const float d_o = dh[j] * s.tanh_c[j];
      const float dc = dh[j] * s.o[j] * (1.0f - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
      const float d_i = dc * s.g[j];
      const float d_g = dc * s.i[j];
      const float d_f = dc * s.c_prev[j];
      dc_next[j] = dc * s.f[j];
      da[kInputGate][j] = d_i * s.i[j] * (1.0f - s.i[j]);
      da[kForgetGate][j] = d_f * s.f[j] * (1.0f - s.f[j]);
      da[kOutputGate][j] = d_o * s.o[j] * (1.0f - s.o[j]);
      da[kCandidate][j] = d_g * (1.0f - s.g[j] * s.g[j]);
    }
    Tensor dx(Shape{layer.input_size});
    dh_next = Tensor(Shape{units});
    for (std::size_t q = 0; q < 4; ++q) {
      accumulate_outer(s.x, da[q], result.dparams.dW[q]);
      accumulate_outer(s.h_prev, da[q], result.dparams.dU[q]);
      for (std::size_t j = 0; j < units; ++j) result.dparams.db[q][j] += da[q][j];
      accumulate_matvec(layer.W[q], da[q], dx);
      accumulate_matvec(layer.U[q], da[q], dh_next);
    }
    std::copy(dx.values().begin(), dx.values().end(), result.dxs.data() + t * layer.input_size);
  }
  return result;
}

// --- GRU -------------------------------------------------------------------

GRULayer GRULayer::zeros(std::size_t input_size, std::size_t units, bool return_sequences) {
  if (input_size < 1 || units < 1) throw ShapeError("gru input_size and units must be >= 1");
  GRULayer layer;
  layer.input_size = input_size;
  layer.units = units;
  layer.W = filled<3>(Shape{input_size, units});
  layer.U = filled<3>(Shape{units, units});
  layer.b = filled<3>(Shape{units});
  layer.return_sequences = return_sequences;
  return layer;
}

GRULayer GRULayer::glorot(std::size_t input_size, std::size_t units, bool return_sequences, Rng& rng) {
  GRULayer layer = zeros(input_size, units, return_sequences);
  for (std::size_t q = 0; q < 3; ++q) {
    layer.W[q] = glorot_uniform(layer.W[q].shape(), input_size, units, rng);
    layer.U[q] = glorot_uniform(layer.U[q].shape(), units, units, rng);
  }
  return layer;
}

std::vector<Tensor*> GRULayer::parameters() {
  std::vector<Tensor*> p;
  for (auto& t : W) p.push_back(&t);
  for (auto& t : U) p.push_back(&t);
  for (auto& t : b) p.push_back(&t);
  return p;
}

std::vector<const Tensor*> GRULayer::parameters() const {
  std::vector<const Tensor*> p;
  for (const auto& t : W) p.push_back(&t);
  for (const auto& t : U) p.push_back(&t);
  for (const auto& t : b) p.push_back(&t);
  return p;
}

void GRUGrads::add(const GRUGrads& other) {
  for (std::size_t q = 0; q < 3; ++q) {
    dW[q] = nf::add(dW[q], other.dW[q]);
    dU[q] = nf::add(dU[q], other.dU[q]);
    db[q] = nf::add(db[q], other.db[q]);
  }
}

std::vector<Tensor> GRUGrads::release() && {
  std::vector<Tensor> out;
  for (auto& t : dW) out.push_back(std::move(t));
  for (auto& t : dU) out.push_back(std::move(t));
  for (auto& t : db) out.push_back(std::move(t));
  return out;
}

namespace {

GRUStepCache gru_step_cached(const GRULayer& layer, const Tensor& x, const RecurrentState& state) {
  check_step_inputs(layer.input_size, layer.units, x, state, false, "gru_step");
  GRUStepCache s;
  s.x = x;
  s.h_prev = state.h;
  s.z = gate_preactivation(x, state.h, layer.W[kUpdateGate], layer.U[kUpdateGate], layer.b[kUpdateGate]);
  s.r = gate_preactivation(x, state.h, layer.W[kResetGate], layer.U[kResetGate], layer.b[kResetGate]);
  s.rh = Tensor(Shape{layer.units});
  for (std::size_t j = 0; j < layer.units; ++j) {
    s.z[j] = sigmoid(s.z[j]);
    s.r[j] = sigmoid(s.r[j]);
    s.rh[j] = s.r[j] * state.h[j];
  }
  s.hh = gate_preactivation(x, s.rh, layer.W[kCandidateGate], layer.U[kCandidateGate], layer.b[kCandidateGate]);
  for (float& v : s.hh.values()) v = std::tanh(v);
  return s;
}

Tensor gru_hidden(const GRUStepCache& s) {
  Tensor h(s.z.shape());
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = (1.0f - s.z[j]) * s.h_prev[j] + s.z[j] * s.hh[j];
  return h;
}

}  // namespace

RecurrentState gru_step(const GRULayer& layer, const Tensor& x_t, const RecurrentState& state) {
  return {gru_hidden(gru_step_cached(layer, x_t, state)), Tensor()};
}

Forward<GRUCache> recurrent_forward(const GRULayer& layer, const Tensor& xs) {
  require_sequence(xs, layer.input_size, "gru");
  const std::size_t steps = xs.shape()[0];
  GRUCache cache;
  cache.steps.reserve(steps);
  RecurrentState state = RecurrentState::zeros(layer.units, false);
  std::vector<float> seq;
  for (std::size_t t = 0; t < steps; ++t) {
    GRUStepCache s = gru_step_cached(layer, sequence_row(xs, t), state);
    state.h = gru_hidden(s);
    if (layer.return_sequences) seq.insert(seq.end(), state.h.values().begin(), state.h.values().end());
    cache.steps.push_back(std::move(s));
  }
  Tensor out = layer.return_sequences ? Tensor(Shape{steps, layer.units}, std::move(seq)) : state.h;
  check_finite(out, "gru forward");
  return {std::move(out), std::move(cache)};
}

RecurrentBackward<GRUGrads> recurrent_backward(const GRULayer& layer, const GRUCache& cache,
                                               const Tensor& d_out) {
  const std::size_t steps = cache.steps.size();
  if (steps == 0) throw EmptySequenceError("gru backward: empty cache");
  const std::size_t units = layer.units;
  check_output_gradient(d_out, steps, units, layer.return_sequences, "gru backward");

  RecurrentBackward<GRUGrads> result;
  result.dxs = Tensor(Shape{steps, layer.input_size});
  result.dparams.dW = filled<3>(Shape{layer.input_size, units});
  result.dparams.dU = filled<3>(Shape{units, units});
  result.dparams.db = filled<3>(Shape{units});

  Tensor dh_next(Shape{units});
  std::array<Tensor, 3> da = filled<3>(Shape{units});
  for (std::size_t t = steps; t-- > 0;) {
    const GRUStepCache& s = cache.steps[t];
    if (s.x.size() != layer.input_size || s.h_prev.size() != units) {
      throw ShapeError("gru backward: cache does not match layer");
    }
    const Tensor dh = add(output_gradient_at(d_out, t, steps, units, layer.return_sequences), dh_next);
    Tensor dh_prev(Shape{units});
    for (std::size_t j = 0; j < units; ++j) {
      const float dz = dh[j] * (s.hh[j] - s.h_prev[j]);
      const float dhh = dh[j] * s.z[j];
      dh_prev[j] = dh[j] * (1.0f - s.z[j]);
      da[kUpdateGate][j] = dz * s.z[j] * (1.0f - s.z[j]);
      da[kCandidateGate][j] = dhh * (1.0f - s.hh[j] * s.hh[j]);
    }
    // Candidate path runs through (r ⊙ h) U_h.
    Tensor drh(Shape{units});
    accumulate_matvec(layer.U[kCandidateGate], da[kCandidateGate], drh);
    for (std::size_t j = 0; j < units; ++j) {
      const float dr = drh[j] * s.h_prev[j];
      dh_prev[j] += drh[j] * s.r[j];
      da[kResetGate][j] = dr * s.r[j] * (1.0f - s.r[j]);
    }
    Tensor dx(Shape{layer.input_size});
    for (std::size_t q = 0; q < 3; ++q) {
      accumulate_outer(s.x, da[q], result.dparams.dW[q]);
      accumulate_outer(q == kCandidateGate ? s.rh : s.h_prev, da[q], result.dparams.dU[q]);
      for (std::size_t j = 0; j < units; ++j) result.dparams.db[q][j] += da[q][j];
      accumulate_matvec(layer.W[q], da[q], dx);
      if (q != kCandidateGate) accumulate_matvec(layer.U[q], da[q], dh_prev);
    }
    dh_next = std::move(dh_prev);
    std::copy(dx.values().begin(), dx.values().end(), result.dxs.data() + t * layer.input_size);
  }
  return result;
}

}  // namespace nf
