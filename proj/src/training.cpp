// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/training.hpp"

#include <chrono>
#include <cmath>

namespace trifuse {

void AugmentationConfig::validate() const {
  if (!(gaussian_sigma >= 0.0) || !std::isfinite(gaussian_sigma)) {
    throw ValidationError("augmentation: gaussian_sigma must be finite and >= 0");
  }
  if (!(modality_dropout_p >= 0.0 && modality_dropout_p <= 1.0)) {
    throw ValidationError("augmentation: modality_dropout_p must lie in [0, 1]");
  }
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw ValidationError("train config: " + msg); };
  if (batch_size == 0) bad("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) bad("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) bad("adam betas must lie in (0, 1)");
  if (!(adam_eps > 0.0)) bad("adam eps must be > 0");
  if (!(grad_clip_norm >= 0.0)) bad("grad_clip_norm must be >= 0");
  augmentation.validate();
}

void to_json(nlohmann::json& j, const AugmentationConfig& c) {
  j = {{"gaussian_sigma", c.gaussian_sigma}, {"modality_dropout_p", c.modality_dropout_p}};
}

void from_json(const nlohmann::json& j, AugmentationConfig& c) {
  AugmentationConfig d;
  c.gaussian_sigma = j.value("gaussian_sigma", d.gaussian_sigma);
  c.modality_dropout_p = j.value("modality_dropout_p", d.modality_dropout_p);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"seed", c.seed},
       {"augmentation", c.augmentation},
       {"early_stop_patience", c.early_stop_patience},
       {"grad_clip_norm", c.grad_clip_norm}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.seed = j.value("seed", d.seed);
  c.augmentation = j.value("augmentation", d.augmentation);
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.grad_clip_norm = j.value("grad_clip_norm", d.grad_clip_norm);
}

OptimizerState OptimizerState::for_params(std::span<const NamedTensor> params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.shape());
    s.v.emplace_back(p.tensor.shape());
  }
  return s;
}

void adam_step(std::span<const NamedTensor> params, OptimizerState& state, const TrainConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                         " buffers for " + std::to_string(params.size()) + " parameters");
  }
  double norm2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].shape() != p.tensor.shape() || state.v[i].shape() != p.tensor.shape()) {
      throw DimensionError("adam_step: moment buffer shape mismatch for " + p.name);
    }
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + p.name);
      norm2 += g * g;
    }
  }
  double clip = 1.0;
  const double norm = std::sqrt(norm2);
  if (config.grad_clip_norm > 0.0 && norm > config.grad_clip_norm) clip = config.grad_clip_norm / norm;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto w = p.values_mut();
    auto m = state.m[i].values_mut();
    auto v = state.v[i].values_mut();
    const bool has = p.has_grad();
    std::span<const double> g = has ? p.grad() : std::span<const double>();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] * clip : 0.0;
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      w[k] -= config.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config.adam_eps);
    }
  }
}

MultimodalSample augment(const MultimodalSample& sample, const AugmentationConfig& config, Rng& rng) {
  MultimodalSample out = sample;
  if (config.gaussian_sigma > 0.0) {
    for (auto* m : {&out.image.features, &out.audio.features}) {
      for (auto& x : m->values) x += config.gaussian_sigma * rng.normal();
    }
  }
  if (config.modality_dropout_p > 0.0 && rng.bernoulli(config.modality_dropout_p)) {
    switch (rng.below(3)) {
      case 0:
        std::fill(out.image.features.values.begin(), out.image.features.values.end(), 0.0);
        break;
      case 1:
        std::fill(out.audio.features.values.begin(), out.audio.features.values.end(), 0.0);
        break;
      default:
        if (out.text.embeddings) {
          std::fill(out.text.embeddings->values.begin(), out.text.embeddings->values.end(), 0.0);
        } else if (out.text.token_ids) {
          std::fill(out.text.token_ids->begin(), out.text.token_ids->end(), 0);
        }
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(Model model, std::vector<const MultimodalSample*> train,
                 std::vector<const MultimodalSample*> val, TrainConfig config, Rng rng)
    : model_(std::move(model)),
      train_(std::move(train)),
      val_(std::move(val)),
      config_(config),
      rng_(std::move(rng)) {
  config_.validate();
  if (train_.empty()) throw ValidationError("training split is empty");
  for (const auto* s : train_) check_compatible(model_.config(), *s);
  for (const auto* s : val_) check_compatible(model_.config(), *s);
  best_ = model_.clone();
  opt_ = OptimizerState::for_params(model_.parameters());
}

bool Trainer::finished() const { return stopped_ || epoch_ >= config_.epochs; }

bool Trainer::run_epoch() {
  if (finished()) return false;
  const auto start = std::chrono::steady_clock::now();
  const auto params = model_.parameters();

  std::vector<const MultimodalSample*> order = train_;
  rng_.shuffle(order);

  double loss_sum = 0.0;
  for (std::size_t first = 0; first < order.size(); first += config_.batch_size) {
    const std::size_t n = std::min(config_.batch_size, order.size() - first);
    std::vector<MultimodalSample> augmented;
    augmented.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      augmented.push_back(augment(*order[first + i], config_.augmentation, rng_));
    }
    std::vector<const MultimodalSample*> ptrs;
    for (const auto& s : augmented) ptrs.push_back(&s);
    const Batch batch = collate(ptrs, model_.config().text_mode);

    for (const auto& p : params) Tensor(p.tensor).zero_grad();
    Tape tape;
    Pass pass{tape, true, model_.config().dropout_p, &rng_};
    ForwardResult r = forward_full(pass, model_, batch);
    tape.backward(r.loss);
    adam_step(params, opt_, config_);
    loss_sum += r.loss.item() * static_cast<double>(n);
  }
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
  ++epoch_;

  const auto& val = val_.empty() ? train_ : val_;
  const EvalReport report = evaluate(model_, val, config_.batch_size);

  EpochLog log;
  log.epoch = epoch_;
  log.train_loss = loss_sum / static_cast<double>(order.size());
  log.val_accuracy = report.accuracy;
  log.val_f1 = report.weighted_f1;
  log.val_auc = report.macro_auc;
  log.weights = model_.effective_weights();
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  logs_.push_back(log);

  if (!best_f1_ || report.weighted_f1 > *best_f1_) {
    best_f1_ = report.weighted_f1;
    best_epoch_ = epoch_;
    best_ = model_.clone();
    stale_epochs_ = 0;
  } else {
    ++stale_epochs_;
    if (config_.early_stop_patience > 0 && stale_epochs_ >= config_.early_stop_patience) stopped_ = true;
  }
  return !finished();
}

TrainResult train(const Model& model, std::vector<const MultimodalSample*> train_split,
                  std::vector<const MultimodalSample*> val_split, const TrainConfig& config, Rng rng) {
  Trainer trainer(model.clone(), std::move(train_split), std::move(val_split), config, std::move(rng));
  TrainResult result;
  try {
    while (trainer.run_epoch()) {
    }
  } catch (const NumericError& e) {
    result.diverged = true;
    result.error = e.what();
  }
  result.best = trainer.best_model().clone();
  result.logs = trainer.logs();
  return result;
}

TrainResult train_from_seed(const ModelConfig& model_config, FusionMode mode,
                            std::vector<const MultimodalSample*> train_split,
                            std::vector<const MultimodalSample*> val_split, const TrainConfig& config) {
  Rng rng(config.seed);
  Model model = Model::init(model_config, mode, rng);
  return train(model, std::move(train_split), std::move(val_split), config, std::move(rng));
}

}  // namespace trifuse
