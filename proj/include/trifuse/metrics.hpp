// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trifuse/data.hpp"

namespace trifuse {

class Model;

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct EvalReport {
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  /// Absent when fewer than two classes occur in the labels.
  std::optional<double> macro_auc;
  double mean_loss = 0.0;
  std::array<ClassScores, kNumClasses> per_class{};
  ConfusionMatrix confusion{};  // [true][predicted]
};

nlohmann::json to_json(const EvalReport& r);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
  std::optional<double> val_auc;
  std::array<double, 3> weights{};  // image, audio, text fusion weights
  double seconds = 0.0;
};

void to_json(nlohmann::json& j, const EpochLog& e);
void from_json(const nlohmann::json& j, EpochLog& e);

/// Fraction of exact matches. Throws DegenerateInputError on empty input.
double accuracy(std::span<const int> preds, std::span<const int> labels);

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels);
std::array<ClassScores, kNumClasses> per_class_scores(const ConfusionMatrix& cm);

/// Per-class F1 (0/0 -> 0) averaged with weights proportional to true-class support.
double weighted_f1(std::span<const int> preds, std::span<const int> labels);

/// One-vs-rest ROC AUC of one score column, ties counted 1/2 (average ranks).
double binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Macro average of one-vs-rest AUCs over the classes present in `labels`.
/// probs is row-major [n x 7]. Throws UndefinedMetricError with < 2 classes.
double macro_auc(std::span<const double> probs, std::span<const int> labels);

/// Deterministic full-split evaluation with dropout off.
EvalReport evaluate(const Model& model, std::span<const MultimodalSample* const> samples,
                    std::size_t batch_size = 16);

/// Report from raw probabilities [n x 7] and labels.
EvalReport make_report(std::span<const double> probs, std::span<const int> labels);

/// CSV: epoch,train_loss,val_acc,val_f1,val_auc,alpha,beta,chi,seconds where
/// alpha/beta/chi are the image/audio/text fusion weights.
std::string epoch_curve_csv(std::span<const EpochLog> logs);
void export_epoch_curve(std::span<const EpochLog> logs, const std::filesystem::path& path);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace trifuse
