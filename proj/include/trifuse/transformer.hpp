// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "trifuse/data.hpp"
#include "trifuse/tensor.hpp"

namespace trifuse {

class Rng;

struct ModelConfig {
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t n_layers = 1;
  std::size_t d_ff = 32;
  double dropout_p = 0.1;
  std::size_t d_img = 14;
  std::size_t d_audio = 14;
  std::size_t d_text = 14;
  TextMode text_mode = TextMode::embeddings;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 64;
  std::size_t n_classes = kNumClasses;

  std::size_t d_head() const { return d_model / n_heads; }
  /// Throws ValidationError on any inconsistent field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// A named trainable tensor; names are stable checkpoint keys.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Per-head query/key/value projections [d_model x d_k] and the shared output
/// projection [n_heads*d_k x d_model].
struct AttentionHeadParams {
  std::vector<Tensor> w_q;
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  Tensor w_o;

  static AttentionHeadParams init(const ModelConfig& config, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct EncoderLayerParams {
  AttentionHeadParams attention;
  Tensor ffn_w1;  // [d_model x d_ff]
  Tensor ffn_b1;
  Tensor ffn_w2;  // [d_ff x d_model]
  Tensor ffn_b2;
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;

  static EncoderLayerParams init(const ModelConfig& config, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Execution context of one forward pass.
struct Pass {
  Tape& tape;
  bool training = false;
  double dropout_p = 0.0;
  Rng* rng = nullptr;
};

/// Uniform(-bound, bound) tensor that requires a gradient.
Tensor uniform_param(Shape shape, double bound, Rng& rng);

/// softmax(QKᵀ/sqrt(d_k) with masked key columns at -inf)·V.
/// Q, K: [S x d_k] or [B x S x d_k]; V likewise with d_v; key_mask [1 x S]
/// or [B x S]. Attention weights pass through dropout when training.
Tensor scaled_dot_attention(const Pass& pass, const Tensor& q, const Tensor& k, const Tensor& v,
                            const Mask& key_mask);

/// Per-head projections, attention, concatenation and output projection.
/// Output shape equals input shape.
Tensor multi_head_attention(const Pass& pass, const Tensor& x, const AttentionHeadParams& params,
                            const Mask& mask);

/// Pre-norm layer: h = x + MHA(LN1(x)); out = h + FFN(LN2(h)), with
/// FFN(u) = W2·dropout(gelu(W1·u + b1)) + b2.
Tensor encoder_layer(const Pass& pass, const Tensor& x, const EncoderLayerParams& params,
                     const Mask& mask);

/// Fixed sinusoidal table: PE[p][2i] = sin(p / 10000^(2i/d)), PE[p][2i+1] = cos(same).
/// Throws ValidationError when seq_len exceeds max_seq_len.
Tensor positional_encoding(std::size_t seq_len, std::size_t d_model, std::size_t max_seq_len);

}  // namespace trifuse
