// Copyright 2026 The alenc Authors.
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

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alenc/core/ops.hpp"
#include "alenc/data/utterance.hpp"
#include "alenc/model/params.hpp"

namespace alenc {

// Text-only recurrence g_i = f_pred(g_{i-1}, y_{i-1}): token embedding
// followed by a single LSTM layer. Gate layout in the 4H columns is
// input, forget, cell, output.
struct PredictionParams {
  Tensor embedding;  // [V x E]
  Tensor input_weight;  // [E x 4H]
  Tensor hidden_weight;  // [H x 4H]
  Tensor bias;  // [4H]

  std::size_t vocab_size() const { return embedding.rows(); }
  std::size_t hidden_size() const { return hidden_weight.rows(); }

  static PredictionParams make(std::size_t vocab, std::size_t embed, std::size_t hidden, Rng& rng) {
    PredictionParams p;
    p.embedding = random_normal({vocab, embed}, rng, 1.0, true);
    p.input_weight = init_weight(embed, 4 * hidden, rng);
    p.hidden_weight = init_weight(hidden, 4 * hidden, rng);
    p.bias = init_zeros({4 * hidden});
    for (std::size_t j = hidden; j < 2 * hidden; ++j) p.bias.mutable_values()[j] = Real(1);
    return p;
  }

  void collect(ParameterSet& ps, const std::string& p) const {
    ps.add(p + ".embedding", embedding);
    ps.add(p + ".lstm.input_weight", input_weight);
    ps.add(p + ".lstm.hidden_weight", hidden_weight);
    ps.add(p + ".lstm.bias", bias);
  }
};

struct PredictionState {
  Tensor hidden;  // [1 x H]
  Tensor cell;    // [1 x H]
  int last_token = -1;  // -1 before <SOS> has been consumed

  static PredictionState zero(std::size_t hidden_size) {
    return {Tensor::zeros({1, hidden_size}), Tensor::zeros({1, hidden_size}), -1};
  }
};

namespace detail {

inline std::pair<Tensor, Tensor> lstm_cell(const Tensor& gates, const Tensor& cell, std::size_t H) {
  Tensor i = sigmoid(slice_cols(gates, 0, H));
  Tensor f = sigmoid(slice_cols(gates, H, 2 * H));
  Tensor g = tanh(slice_cols(gates, 2 * H, 3 * H));
  Tensor o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
  Tensor c = add(mul(f, cell), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace detail

// One LSTM step on the embedding of y_prev. The returned state's hidden
// vector is g_i.
inline PredictionState prediction_step(const PredictionParams& p, const PredictionState& state, int y_prev) {
  if (y_prev < 0 || static_cast<std::size_t>(y_prev) >= p.vocab_size())
    throw ContractError(detail::concat("prediction_step: token ", y_prev, " outside vocabulary of ", p.vocab_size()));
  const int ids[1] = {y_prev};
  Tensor x = gather_rows(p.embedding, ids);
  Tensor gates = add(add_bias(matmul(x, p.input_weight), p.bias), matmul(state.hidden, p.hidden_weight));
  auto [h, c] = detail::lstm_cell(gates, state.cell, p.hidden_size());
  return {h, c, y_prev};
}

// State after consuming <SOS> from the zero state: g_1's producer.
inline PredictionState prediction_start(const PredictionParams& p) {
  return prediction_step(p, PredictionState::zero(p.hidden_size()), kSos);
}

// g for inputs (<SOS>, inputs[0], ..., inputs[n-1]); returns [(n+1) x H].
// Equivalent to chaining prediction_step, with the input projection batched.
inline Tensor prediction_sequence(const PredictionParams& p, std::span<const int> inputs) {
  std::vector<int> ids{kSos};
  ids.insert(ids.end(), inputs.begin(), inputs.end());
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= p.vocab_size())
      throw ContractError(detail::concat("prediction input ", id, " outside vocabulary"));
  const auto H = p.hidden_size();
  Tensor x_proj = add_bias(matmul(gather_rows(p.embedding, ids), p.input_weight), p.bias);
  Tensor h = Tensor::zeros({1, H});
  Tensor c = Tensor::zeros({1, H});
  std::vector<Tensor> outs;
  outs.reserve(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    Tensor gates = add(slice_rows(x_proj, t, t + 1), matmul(h, p.hidden_weight));
    std::tie(h, c) = detail::lstm_cell(gates, c, H);
    outs.push_back(h);
  }
  return concat_rows(outs);
}

// f_joint: tanh(h W_h + g W_g) W_out + b_out. The RNN-T variant has one
// extra output column, the blank, at index V.
struct JointParams {
  Tensor enc_weight;   // [d x J]
  Tensor pred_weight;  // [H x J]
  LinearParams output; // [J x K]

  std::size_t num_outputs() const { return output.weight.cols(); }

  static JointParams make(std::size_t d, std::size_t hidden, std::size_t joint, std::size_t outputs, Rng& rng) {
    return {init_weight(d, joint, rng), init_weight(hidden, joint, rng), LinearParams::make(joint, outputs, rng)};
  }

  void collect(ParameterSet& ps, const std::string& p) const {
    ps.add(p + ".enc_weight", enc_weight);
    ps.add(p + ".pred_weight", pred_weight);
    output.collect(ps, p + ".output");
  }
};

// Row-aligned joint: logits[i] = f_joint(h[i], g[i]).
inline Tensor joint(const Tensor& h, const Tensor& g, const JointParams& p) {
  Tensor z = tanh(add(matmul(h, p.enc_weight), matmul(g, p.pred_weight)));
  return linear(z, p.output.weight, p.output.bias);
}

// All pairs: logits[t*(U+1)+u] = f_joint(h[t], g[u]).
inline Tensor joint_all_pairs(const Tensor& h, const Tensor& g, const JointParams& p) {
  Tensor z = tanh(pairwise_add(matmul(h, p.enc_weight), matmul(g, p.pred_weight)));
  return linear(z, p.output.weight, p.output.bias);
}

// f_ind for the non-autoregressive head and the CTC head:
// tanh(h W_h) W_out + b_out, i.e. the joint with the text path removed.
struct FrameClassifierParams {
  Tensor enc_weight;   // [d x J]
  LinearParams output; // [J x K]

  static FrameClassifierParams make(std::size_t d, std::size_t joint, std::size_t outputs, Rng& rng) {
    return {init_weight(d, joint, rng), LinearParams::make(joint, outputs, rng)};
  }

  void collect(ParameterSet& ps, const std::string& p) const {
    ps.add(p + ".enc_weight", enc_weight);
    output.collect(ps, p + ".output");
  }
};

inline Tensor frame_logits(const Tensor& h, const FrameClassifierParams& p) {
  return linear(tanh(matmul(h, p.enc_weight)), p.output.weight, p.output.bias);
}

}  // namespace alenc
