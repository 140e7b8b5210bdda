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

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "alenc/core/ops.hpp"
#include "alenc/model/params.hpp"

namespace alenc {

enum class PositionMode { rotary, none };

struct EncoderConfig {
  int feature_dim = 16;
  int num_layers = 4;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int conv1d_kernel = 5;
  int subsample_layers = 1;
  int subsample_kernel = 3;
  int subsample_stride = 2;
  int subsample_channels = 8;
  PositionMode position_mode = PositionMode::rotary;
  double rope_base = 10000.0;

  void check() const {
    if (num_heads < 1 || model_dim % num_heads != 0)
      throw ConfigError(detail::concat("model_dim ", model_dim, " not divisible by num_heads ", num_heads));
    if ((model_dim / num_heads) % 2 != 0 && position_mode == PositionMode::rotary)
      throw ConfigError("rotary embedding needs an even head dimension");
    if (num_layers < 0 || subsample_layers < 0 || subsample_stride < 1 || conv1d_kernel < 1)
      throw ConfigError("invalid encoder layer settings");
  }

  // Frames after subsampling: ceil(T / stride) applied once per layer.
  std::size_t output_length(std::size_t T) const {
    for (int i = 0; i < subsample_layers; ++i) T = same_out_len(T, static_cast<std::size_t>(subsample_stride));
    return T;
  }

  std::size_t subsample_factor() const {
    std::size_t f = 1;
    for (int i = 0; i < subsample_layers; ++i) f *= static_cast<std::size_t>(subsample_stride);
    return f;
  }

  std::size_t subsampled_feature_dim() const { return output_length(static_cast<std::size_t>(feature_dim)); }
};

// Self-attention probabilities, probs[layer][head] of shape [T' x T'].
struct AttentionRecord {
  std::vector<std::vector<Tensor>> probs;

  std::size_t num_layers() const { return probs.size(); }
  std::size_t num_heads() const { return probs.empty() ? 0 : probs[0].size(); }

  // Mean over heads of one layer.
  Tensor head_average(std::size_t layer) const {
    if (layer >= probs.size())
      throw std::out_of_range(detail::concat("layer ", layer, " outside record of ", probs.size(), " layers"));
    const auto& heads = probs[layer];
    Tensor avg = Tensor::zeros(heads.at(0).shape());
    auto v = avg.mutable_values();
    for (const auto& h : heads)
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += h[i];
    for (auto& x : v) x /= Real(heads.size());
    return avg;
  }
};

struct FeedForwardParams {
  LayerNormParams norm;
  LinearParams in, out;

  void collect(ParameterSet& ps, const std::string& p) const {
    norm.collect(ps, p + ".norm");
    in.collect(ps, p + ".in");
    out.collect(ps, p + ".out");
  }
};

struct ConformerLayerParams {
  FeedForwardParams ffn1;
  LayerNormParams att_norm;
  LinearParams query, key, value, att_out;
  LayerNormParams conv_norm;
  LinearParams pointwise_in;  // d -> 2d, gated
  Tensor depthwise_weight;    // [k x d]
  Tensor depthwise_bias;      // [d]
  LinearParams pointwise_out;
  FeedForwardParams ffn2;
  LayerNormParams out_norm;

  void collect(ParameterSet& ps, const std::string& p) const {
    ffn1.collect(ps, p + ".ffn1");
    att_norm.collect(ps, p + ".att_norm");
    query.collect(ps, p + ".query");
    key.collect(ps, p + ".key");
    value.collect(ps, p + ".value");
    att_out.collect(ps, p + ".att_out");
    conv_norm.collect(ps, p + ".conv_norm");
    pointwise_in.collect(ps, p + ".pw_in");
    ps.add(p + ".dw.weight", depthwise_weight);
    ps.add(p + ".dw.bias", depthwise_bias);
    pointwise_out.collect(ps, p + ".pw_out");
    ffn2.collect(ps, p + ".ffn2");
    out_norm.collect(ps, p + ".out_norm");
  }
};

struct SubsampleParams {
  std::vector<Tensor> conv_weight;  // [C_out x C_in x k x k]
  std::vector<Tensor> conv_bias;    // [C_out]
  LinearParams projection;          // C * F' -> d

  void collect(ParameterSet& ps, const std::string& p) const {
    for (std::size_t i = 0; i < conv_weight.size(); ++i) {
      ps.add(p + ".conv" + std::to_string(i) + ".weight", conv_weight[i]);
      ps.add(p + ".conv" + std::to_string(i) + ".bias", conv_bias[i]);
    }
    projection.collect(ps, p + ".proj");
  }
};

struct EncoderParams {
  SubsampleParams subsample;
  std::vector<ConformerLayerParams> layers;

  static EncoderParams make(const EncoderConfig& cfg, Rng& rng) {
    cfg.check();
    EncoderParams ep;
    const auto d = static_cast<std::size_t>(cfg.model_dim);
    const auto k = static_cast<std::size_t>(cfg.subsample_kernel);
    const auto ch = static_cast<std::size_t>(cfg.subsample_channels);
    std::size_t cin = 1;
    for (int i = 0; i < cfg.subsample_layers; ++i) {
      ep.subsample.conv_weight.push_back(random_normal({ch, cin, k, k}, rng, 1.0 / std::sqrt(double(cin * k * k)), true));
      ep.subsample.conv_bias.push_back(init_zeros({ch}));
      cin = ch;
    }
    ep.subsample.projection = LinearParams::make(cin * cfg.subsampled_feature_dim(), d, rng);
    const auto ff = static_cast<std::size_t>(cfg.ffn_dim);
    for (int l = 0; l < cfg.num_layers; ++l) {
      ConformerLayerParams lp;
      lp.ffn1 = {LayerNormParams::make(d), LinearParams::make(d, ff, rng), LinearParams::make(ff, d, rng)};
      lp.att_norm = LayerNormParams::make(d);
      lp.query = LinearParams::make(d, d, rng);
      lp.key = LinearParams::make(d, d, rng);
      lp.value = LinearParams::make(d, d, rng);
      lp.att_out = LinearParams::make(d, d, rng);
      lp.conv_norm = LayerNormParams::make(d);
      lp.pointwise_in = LinearParams::make(d, 2 * d, rng);
      const auto kc = static_cast<std::size_t>(cfg.conv1d_kernel);
      lp.depthwise_weight = random_normal({kc, d}, rng, 1.0 / std::sqrt(double(kc)), true);
      lp.depthwise_bias = init_zeros({d});
      lp.pointwise_out = LinearParams::make(d, d, rng);
      lp.ffn2 = {LayerNormParams::make(d), LinearParams::make(d, ff, rng), LinearParams::make(ff, d, rng)};
      lp.out_norm = LayerNormParams::make(d);
      ep.layers.push_back(std::move(lp));
    }
    return ep;
  }

  void collect(ParameterSet& ps, const std::string& p = "encoder") const {
    subsample.collect(ps, p + ".subsample");
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(ps, p + ".layer" + std::to_string(l));
  }

  // Front end plus the first n layers.
  ParameterSet prefix_parameters(std::size_t n, const std::string& p = "encoder") const {
    ParameterSet ps;
    subsample.collect(ps, p + ".subsample");
    for (std::size_t l = 0; l < n && l < layers.size(); ++l) layers[l].collect(ps, p + ".layer" + std::to_string(l));
    return ps;
  }
};

// Strided 2-D convolutions over (time, feature) with ReLU, then a linear
// projection of the flattened channels to the model width.
inline Tensor conv_subsample(const Tensor& features, const EncoderConfig& cfg, const SubsampleParams& p) {
  if (features.rank() != 2 || features.rows() == 0) throw DimensionError("conv_subsample: need [T x F] features");
  if (features.cols() != static_cast<std::size_t>(cfg.feature_dim))
    throw DimensionError(detail::concat("conv_subsample: feature dim ", features.cols(), " != configured ",
                                        cfg.feature_dim));
  Tensor x = reshape(features, {1, features.rows(), features.cols()});
  for (std::size_t i = 0; i < p.conv_weight.size(); ++i)
    x = relu(conv2d_same(x, p.conv_weight[i], p.conv_bias[i], static_cast<std::size_t>(cfg.subsample_stride)));
  return linear(channels_to_features(x), p.projection.weight, p.projection.bias);
}

inline Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  Tensor h = layer_norm(x, p.norm.gain, p.norm.bias);
  h = silu(linear(h, p.in.weight, p.in.bias));
  return linear(h, p.out.weight, p.out.bias);
}

// Multi-head self-attention over all frames (no causal mask). When `record`
// is non-null, each head's probability matrix is appended to it.
inline Tensor self_attention(const Tensor& x, const EncoderConfig& cfg, const ConformerLayerParams& p,
                             std::vector<Tensor>* record) {
  const auto T = x.rows();
  const auto d = static_cast<std::size_t>(cfg.model_dim);
  const auto H = static_cast<std::size_t>(cfg.num_heads);
  const auto dh = d / H;
  Tensor a = layer_norm(x, p.att_norm.gain, p.att_norm.bias);
  Tensor q = linear(a, p.query.weight, p.query.bias);
  Tensor k = linear(a, p.key.weight, p.key.bias);
  Tensor v = linear(a, p.value.weight, p.value.bias);
  std::vector<int> pos(T);
  std::iota(pos.begin(), pos.end(), 0);
  const Real inv_scale = Real(1) / std::sqrt(Real(dh));
  std::vector<Tensor> heads;
  heads.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    if (cfg.position_mode == PositionMode::rotary) {
      qh = rope(qh, pos, Real(cfg.rope_base));
      kh = rope(kh, pos, Real(cfg.rope_base));
    }
    Tensor probs = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
    if (record) record->push_back(probs.detach());
    heads.push_back(matmul(probs, vh));
  }
  return linear(concat_cols(heads), p.att_out.weight, p.att_out.bias);
}

// Layer-norm -> gated pointwise -> depthwise conv -> SiLU -> pointwise.
inline Tensor conv_module(const Tensor& x, const EncoderConfig& cfg, const ConformerLayerParams& p) {
  const auto d = static_cast<std::size_t>(cfg.model_dim);
  Tensor c = layer_norm(x, p.conv_norm.gain, p.conv_norm.bias);
  c = linear(c, p.pointwise_in.weight, p.pointwise_in.bias);
  c = mul(slice_cols(c, 0, d), sigmoid(slice_cols(c, d, 2 * d)));
  c = silu(depthwise_conv1d(c, p.depthwise_weight, p.depthwise_bias));
  return linear(c, p.pointwise_out.weight, p.pointwise_out.bias);
}

// One conformer layer: half-step FFN, MHSA, convolution, half-step FFN,
// each residual, then a final layer norm.
inline Tensor conformer_block(const Tensor& x, const EncoderConfig& cfg, const ConformerLayerParams& p,
                              std::vector<Tensor>* record = nullptr) {
  Tensor y = add(x, scale(feed_forward(x, p.ffn1), Real(0.5)));
  y = add(y, self_attention(y, cfg, p, record));
  y = add(y, conv_module(y, cfg, p));
  y = add(y, scale(feed_forward(y, p.ffn2), Real(0.5)));
  return layer_norm(y, p.out_norm.gain, p.out_norm.bias);
}

// Runs layers [first, last) on already-subsampled frames.
inline Tensor encode_layers(Tensor x, const EncoderConfig& cfg, const EncoderParams& p, std::size_t first,
                            std::size_t last, AttentionRecord* record = nullptr) {
  for (std::size_t l = first; l < last; ++l) {
    std::vector<Tensor>* slot = nullptr;
    if (record) {
      record->probs.emplace_back();
      slot = &record->probs.back();
    }
    x = conformer_block(x, cfg, p.layers.at(l), slot);
  }
  return x;
}

struct EncoderOutput {
  Tensor h;  // [T' x d]
  std::optional<AttentionRecord> attention;
};

inline EncoderOutput encode(const Tensor& features, const EncoderConfig& cfg, const EncoderParams& p,
                            bool record_attention = false) {
  EncoderOutput out;
  Tensor x = conv_subsample(features, cfg, p.subsample);
  if (record_attention) {
    out.attention.emplace();
    out.h = encode_layers(std::move(x), cfg, p, 0, p.layers.size(), &*out.attention);
  } else {
    out.h = encode_layers(std::move(x), cfg, p, 0, p.layers.size());
  }
  return out;
}

// Chunk-parallel encoding: subsample the whole input once, run the layer
// stack on each chunk_frames-sized slice independently, and concatenate.
inline Tensor encode_chunked(const Tensor& features, const EncoderConfig& cfg, const EncoderParams& p,
                             std::size_t chunk_frames) {
  if (chunk_frames == 0) throw ConfigError("chunk_frames must be >= 1");
  Tensor x = conv_subsample(features, cfg, p.subsample);
  const auto T = x.rows();
  if (chunk_frames >= T) return encode_layers(std::move(x), cfg, p, 0, p.layers.size());
  std::vector<Tensor> parts;
  for (std::size_t s = 0; s < T; s += chunk_frames)
    parts.push_back(encode_layers(slice_rows(x, s, std::min(T, s + chunk_frames)), cfg, p, 0, p.layers.size()));
  return concat_rows(parts);
}

}  // namespace alenc
