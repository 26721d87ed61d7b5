// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Modality encoders. Each branch projects its frames into d_model, adds the
// sinusoidal position table, runs the encoder stack under the padding mask
// and mean-pools the valid positions into one summary vector.

#pragma once

#include <string>
#include <vector>

#include "trifuse/data.hpp"
#include "trifuse/transformer.hpp"

namespace trifuse {

struct BranchParams {
  Tensor proj_w;     // [d_in x d_model]
  Tensor proj_b;     // [d_model]
  Tensor embedding;  // [vocab x d_in], token-mode text branch only
  std::vector<EncoderLayerParams> layers;

  /// `vocab` > 0 adds a token embedding table in front of the projection.
  static BranchParams init(const ModelConfig& config, std::size_t d_in, std::size_t vocab, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Mean of the rows of H whose mask entry is set. H [S x d] with mask [1 x S]
/// gives [d]; H [B x S x d] with mask [B x S] gives [B x d].
Tensor masked_mean_pool(Tape& tape, const Tensor& h, const Mask& mask);

/// Shared branch pipeline over padded features [B x S x d_in] -> [B x d_model].
Tensor encode_features(const Pass& pass, const BranchParams& params, const Tensor& features,
                       const Mask& mask, const ModelConfig& config);

/// Token-mode text branch over ids (B*S, zero-padded) -> [B x d_model].
Tensor encode_tokens(const Pass& pass, const BranchParams& params, const std::vector<int>& ids,
                     const Mask& mask, const ModelConfig& config);

// Single-sequence entry points, each returning Z as a [d_model] tensor.
Tensor encode_image(const Pass& pass, const ImageSequence& x, const BranchParams& params,
                    const ModelConfig& config);
Tensor encode_audio(const Pass& pass, const AudioSequence& x, const BranchParams& params,
                    const ModelConfig& config);
Tensor encode_text(const Pass& pass, const TextSequence& x, const BranchParams& params,
                   const ModelConfig& config);

}  // namespace trifuse
