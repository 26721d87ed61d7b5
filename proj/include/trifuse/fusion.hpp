// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adaptive weighted fusion of the three branch summaries, the softmax
// classification head, cross-entropy, and the full model.

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trifuse/branches.hpp"
#include "trifuse/data.hpp"
#include "trifuse/transformer.hpp"

namespace trifuse {

/// Three free logits (image, audio, text); their softmax gives the modality weights.
struct FusionWeights {
  Tensor logits;  // [3]

  static FusionWeights zeros();
  std::array<double, 3> effective() const;
};

struct ClassifierHead {
  Tensor weight;  // [d_model x C]
  Tensor bias;    // [C]

  static ClassifierHead init(const ModelConfig& config, Rng& rng);
};

/// Which branches feed the head. Unimodal modes pin the fusion weights to a
/// simplex vertex and leave the other branches out of the graph.
enum class FusionMode { full, image_only, audio_only, text_only };
std::string_view to_string(FusionMode m);
/// Throws ValidationError on an unknown name.
FusionMode parse_fusion_mode(std::string_view name);

/// Probabilities are clamped to at least this before the log in the loss.
inline constexpr double kLogFloor = 1e-12;

/// w_img*z_img + w_audio*z_audio + w_text*z_text with the weights =
/// softmax(w.logits). Inputs are [d] or [B x d].
Tensor fuse(Tape& tape, const Tensor& z_img, const Tensor& z_audio, const Tensor& z_text,
            const FusionWeights& w);

/// softmax(z·W + b) over the class axis; z is [d] or [B x d].
Tensor classify(Tape& tape, const Tensor& z_fused, const ClassifierHead& head);

/// Mean over rows of -log(p[label] + 1e-12); probs [C] or [B x C].
Tensor cross_entropy(Tape& tape, const Tensor& probs, std::span<const int> labels);

class Model {
 public:
  Model() = default;
  /// Random init drawn from `rng`; fusion logits start at zero, head bias at zero.
  static Model init(const ModelConfig& config, FusionMode mode, Rng& rng);

  const ModelConfig& config() const { return config_; }
  FusionMode mode() const { return mode_; }

  BranchParams& image() { return image_; }
  BranchParams& audio() { return audio_; }
  BranchParams& text() { return text_; }
  FusionWeights& fusion() { return fusion_; }
  ClassifierHead& head() { return head_; }
  const BranchParams& image() const { return image_; }
  const BranchParams& audio() const { return audio_; }
  const BranchParams& text() const { return text_; }
  const FusionWeights& fusion() const { return fusion_; }
  const ClassifierHead& head() const { return head_; }

  /// (image, audio, text) weights in effect: softmax of the logits in full mode, the
  /// pinned one-hot vertex otherwise.
  std::array<double, 3> effective_weights() const;

  /// Every trainable tensor with its stable name. Handles alias the model.
  std::vector<NamedTensor> parameters() const;

  /// Deep copy with independent storage.
  Model clone() const;

 private:
  ModelConfig config_;
  FusionMode mode_ = FusionMode::full;
  BranchParams image_;
  BranchParams audio_;
  BranchParams text_;
  FusionWeights fusion_;
  ClassifierHead head_;
};

struct ForwardResult {
  Tensor probs;  // [B x C] for batches, [C] for a single sample
  Tensor loss;   // [1], mean over the batch
};

/// Encode, fuse, classify and score a padded batch on one tape.
ForwardResult forward_full(const Pass& pass, const Model& model, const Batch& batch);
ForwardResult forward_full(const Pass& pass, const Model& model, const MultimodalSample& sample);

/// Checks a sample's dims and text mode against the model config.
void check_compatible(const ModelConfig& config, const MultimodalSample& sample);

}  // namespace trifuse
