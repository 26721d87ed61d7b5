// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/transformer.hpp"

#include <cmath>

#include "trifuse/rng.hpp"

namespace trifuse {

void ModelConfig::validate() const {
  auto bad = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) {
    bad("d_model, n_heads, n_layers and d_ff must be positive");
  }
  if (d_model % n_heads != 0) {
    bad("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
        std::to_string(n_heads));
  }
  if (d_img == 0 || d_audio == 0 || d_text == 0) bad("d_img, d_audio and d_text must be positive");
  if (text_mode == TextMode::tokens && vocab_size == 0) bad("tokens mode needs vocab_size > 0");
  if (max_seq_len == 0) bad("max_seq_len must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) bad("dropout_p must lie in [0, 1)");
  if (n_classes != kNumClasses) bad("n_classes is fixed at 7");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},       {"n_heads", c.n_heads},
                     {"n_layers", c.n_layers},     {"d_ff", c.d_ff},
                     {"dropout_p", c.dropout_p},   {"d_img", c.d_img},
                     {"d_audio", c.d_audio},       {"d_text", c.d_text},
                     {"text_mode", to_string(c.text_mode)},
                     {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
                     {"n_classes", c.n_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.dropout_p = j.value("dropout_p", d.dropout_p);
  c.d_img = j.value("d_img", d.d_img);
  c.d_audio = j.value("d_audio", d.d_audio);
  c.d_text = j.value("d_text", d.d_text);
  c.text_mode = parse_text_mode(j.value("text_mode", std::string(to_string(d.text_mode))));
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.n_classes = j.value("n_classes", d.n_classes);
}

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape), true);
  for (auto& v : t.values_mut()) v = rng.uniform(-bound, bound);
  return t;
}

AttentionHeadParams AttentionHeadParams::init(const ModelConfig& config, Rng& rng) {
  AttentionHeadParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  const std::size_t dk = config.d_head();
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    p.w_q.push_back(uniform_param({config.d_model, dk}, bound, rng));
    p.w_k.push_back(uniform_param({config.d_model, dk}, bound, rng));
    p.w_v.push_back(uniform_param({config.d_model, dk}, bound, rng));
  }
  p.w_o = uniform_param({config.n_heads * dk, config.d_model},
                        1.0 / std::sqrt(static_cast<double>(config.n_heads * dk)), rng);
  return p;
}

void AttentionHeadParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t h = 0; h < w_q.size(); ++h) {
    const std::string head = prefix + "head" + std::to_string(h) + ".";
    out.push_back({head + "w_q", w_q[h]});
    out.push_back({head + "w_k", w_k[h]});
    out.push_back({head + "w_v", w_v[h]});
  }
  out.push_back({prefix + "w_o", w_o});
}

EncoderLayerParams EncoderLayerParams::init(const ModelConfig& config, Rng& rng) {
  EncoderLayerParams p;
  p.attention = AttentionHeadParams::init(config, rng);
  p.ffn_w1 = uniform_param({config.d_model, config.d_ff},
                           1.0 / std::sqrt(static_cast<double>(config.d_model)), rng);
  p.ffn_b1 = Tensor({config.d_ff}, true);
  p.ffn_w2 = uniform_param({config.d_ff, config.d_model},
                           1.0 / std::sqrt(static_cast<double>(config.d_ff)), rng);
  p.ffn_b2 = Tensor({config.d_model}, true);
  p.ln1_gain = Tensor::filled({config.d_model}, 1.0, true);
  p.ln1_bias = Tensor({config.d_model}, true);
  p.ln2_gain = Tensor::filled({config.d_model}, 1.0, true);
  p.ln2_bias = Tensor({config.d_model}, true);
  return p;
}

void EncoderLayerParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  attention.collect(prefix + "attn.", out);
  out.push_back({prefix + "ffn.w1", ffn_w1});
  out.push_back({prefix + "ffn.b1", ffn_b1});
  out.push_back({prefix + "ffn.w2", ffn_w2});
  out.push_back({prefix + "ffn.b2", ffn_b2});
  out.push_back({prefix + "ln1.gain", ln1_gain});
  out.push_back({prefix + "ln1.bias", ln1_bias});
  out.push_back({prefix + "ln2.gain", ln2_gain});
  out.push_back({prefix + "ln2.bias", ln2_bias});
}

Tensor scaled_dot_attention(const Pass& pass, const Tensor& q, const Tensor& k, const Tensor& v,
                            const Mask& key_mask) {
  if (q.rank() != k.rank() || q.rank() != v.rank() || q.shape().back() != k.shape().back()) {
    throw DimensionError("scaled_dot_attention: Q " + shape_string(q.shape()) + ", K " +
                         shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  }
  const double dk = static_cast<double>(q.shape().back());
  Tensor scores = scale(pass.tape, matmul_nt(pass.tape, q, k), 1.0 / std::sqrt(dk));
  Tensor weights = masked_softmax_rows(pass.tape, scores, key_mask);
  weights = dropout(pass.tape, weights, pass.dropout_p, pass.training, pass.rng);
  return matmul(pass.tape, weights, v);
}

Tensor multi_head_attention(const Pass& pass, const Tensor& x, const AttentionHeadParams& params,
                            const Mask& mask) {
  std::vector<Tensor> heads;
  heads.reserve(params.w_q.size());
  for (std::size_t h = 0; h < params.w_q.size(); ++h) {
    Tensor q = matmul(pass.tape, x, params.w_q[h]);
    Tensor k = matmul(pass.tape, x, params.w_k[h]);
    Tensor v = matmul(pass.tape, x, params.w_v[h]);
    heads.push_back(scaled_dot_attention(pass, q, k, v, mask));
  }
  Tensor joined = heads.size() == 1 ? heads[0] : concat_last(pass.tape, heads);
  return matmul(pass.tape, joined, params.w_o);
}

Tensor encoder_layer(const Pass& pass, const Tensor& x, const EncoderLayerParams& p,
                     const Mask& mask) {
  Tape& tape = pass.tape;
  Tensor attn = multi_head_attention(pass, layer_norm(tape, x, p.ln1_gain, p.ln1_bias), p.attention, mask);
  Tensor h = add(tape, x, attn);
  Tensor u = layer_norm(tape, h, p.ln2_gain, p.ln2_bias);
  Tensor f = gelu(tape, add_bias(tape, matmul(tape, u, p.ffn_w1), p.ffn_b1));
  f = dropout(tape, f, pass.dropout_p, pass.training, pass.rng);
  f = add_bias(tape, matmul(tape, f, p.ffn_w2), p.ffn_b2);
  return add(tape, h, f);
}

Tensor positional_encoding(std::size_t seq_len, std::size_t d_model, std::size_t max_seq_len) {
  if (seq_len > max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(seq_len) + " exceeds max_seq_len " +
                          std::to_string(max_seq_len));
  }
  Tensor pe({seq_len, d_model});
  auto v = pe.values_mut();
  for (std::size_t p = 0; p < seq_len; ++p) {
    for (std::size_t c = 0; c < d_model; ++c) {
      const std::size_t i2 = c - (c % 2);  // 2i
      const double angle = static_cast<double>(p) /
                           std::pow(10000.0, static_cast<double>(i2) / static_cast<double>(d_model));
      v[p * d_model + c] = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace trifuse
