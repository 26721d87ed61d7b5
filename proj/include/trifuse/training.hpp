// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch Adam training with augmentation, early stopping on validation
// weighted F1, and resumable state.
//
// All randomness comes from one Rng stream. Per epoch the draw order is:
// shuffle of the training order, then for each batch the per-sample
// augmentation draws followed by the dropout masks of that batch's forward.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trifuse/fusion.hpp"
#include "trifuse/metrics.hpp"
#include "trifuse/rng.hpp"

namespace trifuse {

struct AugmentationConfig {
  double gaussian_sigma = 0.01;
  double modality_dropout_p = 0.1;

  void validate() const;
  friend bool operator==(const AugmentationConfig&, const AugmentationConfig&) = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;
  std::size_t early_stop_patience = 0;  // 0 disables
  double grad_clip_norm = 1.0;          // 0 disables

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const AugmentationConfig& c);
void from_json(const nlohmann::json& j, AugmentationConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// First/second moment buffers aligned with Model::parameters().
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static OptimizerState for_params(std::span<const NamedTensor> params);
};

/// One Adam update with bias correction. When grad_clip_norm > 0 and the
/// global gradient norm exceeds it, all gradients are scaled down to that
/// norm first. Parameters without a gradient are treated as zero-gradient.
/// Throws NumericError naming the parameter on a NaN/Inf gradient.
void adam_step(std::span<const NamedTensor> params, OptimizerState& state, const TrainConfig& config);

/// Feature noise on image/audio plus, with probability modality_dropout_p,
/// zeroing one uniformly chosen modality. The input is left untouched.
MultimodalSample augment(const MultimodalSample& sample, const AugmentationConfig& config, Rng& rng);

/// Stateful trainer; one call to run_epoch() is one pass over the training
/// split followed by validation.
class Trainer {
 public:
  /// `val` may be empty, in which case validation runs on the training split.
  Trainer(Model model, std::vector<const MultimodalSample*> train,
          std::vector<const MultimodalSample*> val, TrainConfig config, Rng rng);

  /// Returns false once early stopping fired or the epoch budget is spent.
  bool run_epoch();
  bool finished() const;

  const Model& model() const { return model_; }
  /// Parameters of the best-validation epoch (the initial model before any epoch).
  const Model& best_model() const { return best_; }
  const std::vector<EpochLog>& logs() const { return logs_; }
  const TrainConfig& config() const { return config_; }
  const OptimizerState& optimizer() const { return opt_; }
  const Rng& rng() const { return rng_; }
  std::size_t epoch() const { return epoch_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores trainer state from a checkpoint written by save_checkpoint.
  static Trainer resume(const std::filesystem::path& path, std::vector<const MultimodalSample*> train,
                        std::vector<const MultimodalSample*> val);
  /// Resume with an overridden config (e.g. a larger epoch budget).
  static Trainer resume(const std::filesystem::path& path, std::vector<const MultimodalSample*> train,
                        std::vector<const MultimodalSample*> val, const TrainConfig& config);

 private:
  Model model_;
  Model best_;
  std::vector<const MultimodalSample*> train_;
  std::vector<const MultimodalSample*> val_;
  TrainConfig config_;
  Rng rng_;
  OptimizerState opt_;
  std::vector<EpochLog> logs_;
  std::size_t epoch_ = 0;
  std::optional<double> best_f1_;
  std::size_t best_epoch_ = 0;
  std::size_t stale_epochs_ = 0;
  bool stopped_ = false;
};

struct TrainResult {
  Model best;
  std::vector<EpochLog> logs;
  bool diverged = false;
  std::string error;  // set when diverged
};

/// Initializes nothing: trains the given model. Divergence (a non-finite
/// value anywhere in a step) aborts the run; `best` then holds the last good
/// best-validation parameters.
TrainResult train(const Model& model, std::vector<const MultimodalSample*> train_split,
                  std::vector<const MultimodalSample*> val_split, const TrainConfig& config, Rng rng);

/// Builds a model from `rng` (the same stream training then continues on)
/// and trains it.
TrainResult train_from_seed(const ModelConfig& model_config, FusionMode mode,
                            std::vector<const MultimodalSample*> train_split,
                            std::vector<const MultimodalSample*> val_split, const TrainConfig& config);

}  // namespace trifuse
