// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multimodal samples, the JSONL interchange format, padded batching and the
// class-conditional synthetic generator.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trifuse/tensor.hpp"

namespace trifuse {

class Rng;

inline constexpr std::size_t kNumClasses = 7;

/// Emotion label set with stable integer codes 0-6.
enum class Emotion : int { joy = 0, anger, sadness, fear, surprise, disgust, neutral };

inline constexpr std::array<std::string_view, kNumClasses> kEmotionNames = {
    "joy", "anger", "sadness", "fear", "surprise", "disgust", "neutral"};

std::string_view to_string(Emotion e);
/// Throws ValidationError listing the legal names on an unknown label.
Emotion parse_emotion(std::string_view name);
inline int code(Emotion e) { return static_cast<int>(e); }

enum class TextMode { embeddings, tokens };
std::string_view to_string(TextMode m);
TextMode parse_text_mode(std::string_view name);

/// Row-major [rows x cols] feature block, one row per time step.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols, cols);
  }
  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct ImageSequence {
  FeatureMatrix features;  // [T x d_img]
  friend bool operator==(const ImageSequence&, const ImageSequence&) = default;
};

struct AudioSequence {
  FeatureMatrix features;  // [L x d_audio]
  friend bool operator==(const AudioSequence&, const AudioSequence&) = default;
};

/// Exactly one of `embeddings` (precomputed [N x d_text]) or `token_ids` is set.
struct TextSequence {
  std::optional<FeatureMatrix> embeddings;
  std::optional<std::vector<int>> token_ids;

  std::size_t length() const;
  friend bool operator==(const TextSequence&, const TextSequence&) = default;
};

struct MultimodalSample {
  std::string id;
  std::optional<std::string> dialogue_id;
  ImageSequence image;
  AudioSequence audio;
  TextSequence text;
  Emotion label = Emotion::neutral;

  friend bool operator==(const MultimodalSample&, const MultimodalSample&) = default;
};

struct DatasetHeader {
  int version = 1;
  std::size_t d_img = 0;
  std::size_t d_audio = 0;
  TextMode text_mode = TextMode::embeddings;
  std::size_t d_text = 0;      // embeddings mode
  std::size_t vocab_size = 0;  // tokens mode

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// Samples plus named id-list splits. When a file carries no split table,
/// every sample belongs to the single split "all".
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetHeader header, std::vector<MultimodalSample> samples,
          std::map<std::string, std::vector<std::string>> splits);

  const DatasetHeader& header() const { return header_; }
  const std::vector<MultimodalSample>& samples() const { return samples_; }
  const std::map<std::string, std::vector<std::string>>& splits() const { return splits_; }

  bool has_split(const std::string& name) const { return splits_.contains(name); }
  /// Samples of a split in listed order. Throws ValidationError on an unknown name.
  std::vector<const MultimodalSample*> split(const std::string& name) const;
  const MultimodalSample* find(const std::string& id) const;

  /// Checks a sample against the header dims and text mode.
  void check_sample(const MultimodalSample& s) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.header_ == b.header_ && a.samples_ == b.samples_ && a.splits_ == b.splits_;
  }

 private:
  void validate() const;

  DatasetHeader header_;
  std::vector<MultimodalSample> samples_;
  std::map<std::string, std::vector<std::string>> splits_;
  std::unordered_map<std::string, std::size_t> index_;
};

Dataset load_jsonl(const std::filesystem::path& path);
Dataset parse_jsonl(std::string_view text);
void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);
std::string to_jsonl(const Dataset& dataset);

/// Parses a single sample line against a header (used by prediction).
MultimodalSample parse_sample_line(std::string_view line, const DatasetHeader& header);
std::string sample_to_json_line(const MultimodalSample& s);

struct SynthSpec {
  std::size_t n_samples = 70;
  std::size_t d_img = 14;
  std::size_t d_audio = 14;
  TextMode text_mode = TextMode::embeddings;
  std::size_t d_text = 14;
  std::size_t vocab_size = 64;
  std::size_t min_len = 4;
  std::size_t max_len = 8;
  /// Per-modality class separation knob (image, audio, text), each in [0, 1].
  std::array<double, 3> informativeness = {0.8, 0.8, 0.8};
  /// Distance scale of the class means at informativeness 1.
  double separation = 1.0;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class-conditional Gaussian dataset. Frame features are N(mu_c, 1) where
/// mu_c is `separation * informativeness` on the coordinates j with
/// j % 7 == c; informativeness 0 makes every class identically distributed.
/// Labels are balanced within each of the train/val/test splits.
Dataset generate_synthetic(const SynthSpec& spec);

/// Zero-padded modality block with its validity mask.
struct PaddedFeatures {
  Tensor features;  // [B x S_max x d]
  Mask mask;        // [B x S_max]
};

struct Batch {
  PaddedFeatures image;
  PaddedFeatures audio;
  PaddedFeatures text;           // embeddings mode
  std::vector<int> text_tokens;  // tokens mode, B * S_max, padded with 0
  Mask text_token_mask;
  TextMode text_mode = TextMode::embeddings;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Pads the given samples to the batch's own per-modality maximum lengths.
Batch collate(std::span<const MultimodalSample* const> samples, TextMode text_mode);

/// Splits `samples` into batches of `batch_size` (last one partial). If `rng`
/// is given the order is shuffled with it first.
std::vector<Batch> make_batches(std::span<const MultimodalSample* const> samples,
                                std::size_t batch_size, TextMode text_mode, Rng* rng);

}  // namespace trifuse
