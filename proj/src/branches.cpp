// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/branches.hpp"

#include <cmath>

#include "trifuse/rng.hpp"

namespace trifuse {

BranchParams BranchParams::init(const ModelConfig& config, std::size_t d_in, std::size_t vocab,
                                Rng& rng) {
  BranchParams p;
  if (vocab > 0) p.embedding = uniform_param({vocab, d_in}, 1.0, rng);
  p.proj_w = uniform_param({d_in, config.d_model}, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  p.proj_b = Tensor({config.d_model}, true);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    p.layers.push_back(EncoderLayerParams::init(config, rng));
  }
  return p;
}

void BranchParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  if (embedding.defined()) out.push_back({prefix + "embedding", embedding});
  out.push_back({prefix + "proj.w", proj_w});
  out.push_back({prefix + "proj.b", proj_b});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(prefix + "layer" + std::to_string(l) + ".", out);
  }
}

Tensor masked_mean_pool(Tape& tape, const Tensor& h, const Mask& mask) {
  std::size_t batch = 1;
  std::size_t seq = 0;
  std::size_t d = 0;
  Shape out_shape;
  if (h.rank() == 2) {
    seq = h.dim(0);
    d = h.dim(1);
    out_shape = {d};
  } else if (h.rank() == 3) {
    batch = h.dim(0);
    seq = h.dim(1);
    d = h.dim(2);
    out_shape = {batch, d};
  } else {
    throw DimensionError("masked_mean_pool: need rank 2 or 3, got " + shape_string(h.shape()));
  }
  if (mask.rows != batch || mask.cols != seq) {
    throw DimensionError("masked_mean_pool: mask does not fit " + shape_string(h.shape()));
  }
  std::vector<double> inv_count(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = mask.count(b);
    if (n == 0) {
      throw DegenerateInputError("masked_mean_pool: sequence " + std::to_string(b) +
                                 " has no valid position");
    }
    inv_count[b] = 1.0 / static_cast<double>(n);
  }
  Tensor out(out_shape);
  {
    auto hv = h.values();
    auto ov = out.values_mut();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t s = 0; s < seq; ++s) {
        if (!mask.at(b, s)) continue;
        for (std::size_t c = 0; c < d; ++c) ov[b * d + c] += hv[(b * seq + s) * d + c];
      }
      for (std::size_t c = 0; c < d; ++c) ov[b * d + c] *= inv_count[b];
    }
  }
  require_finite(out, "masked_mean_pool");
  tape.record({&h}, out, [h, out, mask, inv_count = std::move(inv_count), batch, seq, d]() mutable {
    auto g = out.grad();
    auto dh = h.grad_mut();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t s = 0; s < seq; ++s) {
        if (!mask.at(b, s)) continue;
        for (std::size_t c = 0; c < d; ++c) dh[(b * seq + s) * d + c] += g[b * d + c] * inv_count[b];
      }
    }
  });
  return out;
}

namespace {

// Runs position encoding, the layer stack and pooling on projected input.
Tensor encode_projected(const Pass& pass, const BranchParams& params, const Tensor& x,
                        const Mask& mask, const ModelConfig& config) {
  const std::size_t batch = x.dim(0);
  const std::size_t seq = x.dim(1);
  const Tensor pe = positional_encoding(seq, config.d_model, config.max_seq_len);
  Tensor tiled({batch, seq, config.d_model});
  {
    auto src = pe.values();
    auto dst = tiled.values_mut();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * src.size()));
    }
  }
  Tensor h = add(pass.tape, x, tiled);
  for (const auto& layer : params.layers) h = encoder_layer(pass, h, layer, mask);
  return masked_mean_pool(pass.tape, h, mask);
}

Tensor single(const Pass& pass, const BranchParams& params, const FeatureMatrix& m,
              std::size_t expected_dim, const char* what, const ModelConfig& config) {
  if (m.rows == 0) throw DegenerateInputError(std::string(what) + ": empty sequence");
  if (m.cols != expected_dim) {
    throw DimensionError(std::string(what) + ": feature dim " + std::to_string(m.cols) +
                         " does not match config " + std::to_string(expected_dim));
  }
  Tensor features({1, m.rows, m.cols}, m.values);
  Tensor z = encode_features(pass, params, features, Mask::all_valid(1, m.rows), config);
  return reshape(pass.tape, z, {config.d_model});
}

}  // namespace

Tensor encode_features(const Pass& pass, const BranchParams& params, const Tensor& features,
                       const Mask& mask, const ModelConfig& config) {
  if (features.rank() != 3 || features.dim(2) != params.proj_w.dim(0)) {
    throw DimensionError("encode_features: features " + shape_string(features.shape()) +
                         " do not match projection " + shape_string(params.proj_w.shape()));
  }
  Tensor x = add_bias(pass.tape, matmul(pass.tape, features, params.proj_w), params.proj_b);
  return encode_projected(pass, params, x, mask, config);
}

Tensor encode_tokens(const Pass& pass, const BranchParams& params, const std::vector<int>& ids,
                     const Mask& mask, const ModelConfig& config) {
  if (!params.embedding.defined()) throw ValidationError("encode_tokens: branch has no embedding table");
  Tensor emb = embedding(pass.tape, params.embedding, ids, mask.rows, mask.cols);
  Tensor x = add_bias(pass.tape, matmul(pass.tape, emb, params.proj_w), params.proj_b);
  return encode_projected(pass, params, x, mask, config);
}

Tensor encode_image(const Pass& pass, const ImageSequence& x, const BranchParams& params,
                    const ModelConfig& config) {
  return single(pass, params, x.features, config.d_img, "encode_image", config);
}

Tensor encode_audio(const Pass& pass, const AudioSequence& x, const BranchParams& params,
                    const ModelConfig& config) {
  return single(pass, params, x.features, config.d_audio, "encode_audio", config);
}

Tensor encode_text(const Pass& pass, const TextSequence& x, const BranchParams& params,
                   const ModelConfig& config) {
  if (x.embeddings.has_value() == x.token_ids.has_value()) {
    throw ValidationError("encode_text: exactly one of embeddings or token ids must be present");
  }
  if (x.embeddings) {
    if (params.embedding.defined()) {
      throw ValidationError("encode_text: precomputed embeddings given to a token-mode branch");
    }
    return single(pass, params, *x.embeddings, config.d_text, "encode_text", config);
  }
  if (!params.embedding.defined()) {
    throw ValidationError("encode_text: token ids given to an embeddings-mode branch");
  }
  const auto& ids = *x.token_ids;
  if (ids.empty()) throw DegenerateInputError("encode_text: empty sequence");
  Tensor z = encode_tokens(pass, params, ids, Mask::all_valid(1, ids.size()), config);
  return reshape(pass.tape, z, {config.d_model});
}

}  // namespace trifuse
