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

#include <array>
#include <cstddef>
#include <vector>

#include "neurofuse/layers.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/tensor.hpp"

namespace nf {

struct RecurrentState {
  Tensor h;  // [units]
  Tensor c;  // [units]; LSTM only, empty for GRU

  static RecurrentState zeros(std::size_t units, bool with_cell);
};

// Standard LSTM without peepholes. Gate arrays are indexed by LstmGate.
enum LstmGate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

struct LSTMLayer {
  std::size_t input_size = 0;
  std::size_t units = 0;
  std::array<Tensor, 4> W;  // [input_size, units]
  std::array<Tensor, 4> U;  // [units, units]
  std::array<Tensor, 4> b;  // [units]
  bool return_sequences = false;

  static LSTMLayer zeros(std::size_t input_size, std::size_t units, bool return_sequences);
  // Glorot-uniform weights, forget-gate bias 1, other biases 0.
  static LSTMLayer glorot(std::size_t input_size, std::size_t units, bool return_sequences, Rng& rng);

  // W_i, W_f, W_o, W_c, U_i, ..., b_c.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

struct LSTMStepCache {
  Tensor x, h_prev, c_prev;
  Tensor i, f, o, g;  // gate activations
  Tensor c, tanh_c;
};

struct LSTMCache {
  std::vector<LSTMStepCache> steps;
};

struct LSTMGrads {
  std::array<Tensor, 4> dW, dU, db;
  void add(const LSTMGrads& other);
  std::vector<Tensor> release() &&;
};

RecurrentState lstm_step(const LSTMLayer& layer, const Tensor& x_t, const RecurrentState& state);

// Standard GRU with the reset gate applied before the recurrent product.
enum GruGate : std::size_t { kUpdateGate = 0, kResetGate = 1, kCandidateGate = 2 };

struct GRULayer {
  std::size_t input_size = 0;
  std::size_t units = 0;
  std::array<Tensor, 3> W;
  std::array<Tensor, 3> U;
  std::array<Tensor, 3> b;
  bool return_sequences = false;

  static GRULayer zeros(std::size_t input_size, std::size_t units, bool return_sequences);
  static GRULayer glorot(std::size_t input_size, std::size_t units, bool return_sequences, Rng& rng);

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
};

struct GRUStepCache {
  Tensor x, h_prev;
  Tensor z, r, hh, rh;
};

struct GRUCache {
  std::vector<GRUStepCache> steps;
};

struct GRUGrads {
  std::array<Tensor, 3> dW, dU, db;
  void add(const GRUGrads& other);
  std::vector<Tensor> release() &&;
};

RecurrentState gru_step(const GRULayer& layer, const Tensor& x_t, const RecurrentState& state);

template <class Grads>
struct RecurrentBackward {
  Tensor dxs;  // [T, input_size]
  Grads dparams;
};

// Runs the layer over xs [T, input_size] from a zero state. Output is
// [T, units] with return_sequences, otherwise the final hidden state [units].
Forward<LSTMCache> recurrent_forward(const LSTMLayer& layer, const Tensor& xs);
Forward<GRUCache> recurrent_forward(const GRULayer& layer, const Tensor& xs);

// Backpropagation through time. d_out has the shape of the forward output.
RecurrentBackward<LSTMGrads> recurrent_backward(const LSTMLayer& layer, const LSTMCache& cache,
                                                const Tensor& d_out);
RecurrentBackward<GRUGrads> recurrent_backward(const GRULayer& layer, const GRUCache& cache,
                                               const Tensor& d_out);

}  // namespace nf
