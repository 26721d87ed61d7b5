// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations and random generators shared by the
// unit and acceptance suites. Nothing here calls into the library's math.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "trifuse/data.hpp"
#include "trifuse/fusion.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/tensor.hpp"

namespace trifuse::testing {

// --- oracles ---------------------------------------------------------------

/// Triple loop, row-major, a [m x k], b [k x n].
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

/// Row-wise attention straight from the definition. q [s x d], k [t x d],
/// v [t x dv], valid marks usable key rows.
inline std::vector<double> naive_attention(const std::vector<double>& q, const std::vector<double>& k,
                                           const std::vector<double>& v, const std::vector<bool>& valid,
                                           std::size_t s, std::size_t t, std::size_t d, std::size_t dv) {
  std::vector<double> out(s * dv, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<double> score(t, 0.0);
    double top = -INFINITY;
    for (std::size_t j = 0; j < t; ++j) {
      if (!valid[j]) continue;
      for (std::size_t p = 0; p < d; ++p) score[j] += q[i * d + p] * k[j * d + p];
      score[j] /= std::sqrt(static_cast<double>(d));
      top = std::max(top, score[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      score[j] = valid[j] ? std::exp(score[j] - top) : 0.0;
      z += score[j];
    }
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += score[j] / z * v[j * dv + c];
  }
  return out;
}

/// Two-pass mean / variance normalisation of each row.
inline std::vector<double> naive_layer_norm(const std::vector<double>& x, std::size_t rows, std::size_t d,
                                            const std::vector<double>& gain, const std::vector<double>& bias,
                                            double eps) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += x[r * d + c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (x[r * d + c] - mu) * (x[r * d + c] - mu);
    var /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      out[r * d + c] = (x[r * d + c] - mu) / std::sqrt(var + eps) * gain[c] + bias[c];
    }
  }
  return out;
}

/// Fraction of positive-negative pairs ranked correctly, ties count one half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

/// Mean one-vs-rest pairwise AUC over the classes present in `labels`.
inline double pairwise_macro_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    if (std::find(labels.begin(), labels.end(), c) == labels.end()) continue;
    std::vector<double> col;
    std::vector<bool> pos;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      col.push_back(probs[i * kNumClasses + static_cast<std::size_t>(c)]);
      pos.push_back(labels[i] == c);
    }
    total += pairwise_auc(col, pos);
    ++used;
  }
  return total / used;
}

inline double count_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  int hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += preds[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Support-weighted F1 from per-sample counting; a 0/0 ratio counts as 0.
inline double count_weighted_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
  double total = 0.0;
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (preds[i] == c && labels[i] == c) tp += 1;
      if (preds[i] == c && labels[i] != c) fp += 1;
      if (preds[i] != c && labels[i] == c) fn += 1;
    }
    const double support = tp + fn;
    if (support == 0) continue;
    const double denom = 2 * tp + fp + fn;
    total += (denom == 0 ? 0.0 : 2 * tp / denom) * support;
  }
  return total / static_cast<double>(labels.size());
}

// --- generators ------------------------------------------------------------

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = false, double lo = -1.0,
                            double hi = 1.0) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), random_values(rng, n, lo, hi), requires_grad);
}

inline FeatureMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  return FeatureMatrix{rows, cols, random_values(rng, rows * cols)};
}

/// A sample with independent random lengths in [min_len, max_len].
inline MultimodalSample random_sample(Rng& rng, const ModelConfig& c, std::size_t min_len,
                                      std::size_t max_len, int label, const std::string& id = "x") {
  auto len = [&] { return min_len + rng.below(max_len - min_len + 1); };
  MultimodalSample s;
  s.id = id;
  s.image.features = random_matrix(rng, len(), c.d_img);
  s.audio.features = random_matrix(rng, len(), c.d_audio);
  if (c.text_mode == TextMode::embeddings) {
    s.text.embeddings = random_matrix(rng, len(), c.d_text);
  } else {
    std::vector<int> ids(len());
    for (auto& t : ids) t = static_cast<int>(rng.below(c.vocab_size));
    s.text.token_ids = ids;
  }
  s.label = static_cast<Emotion>(label);
  return s;
}

inline ModelConfig tiny_config(std::size_t d_model = 8, std::size_t heads = 2, std::size_t layers = 1) {
  ModelConfig c;
  c.d_model = d_model;
  c.n_heads = heads;
  c.n_layers = layers;
  c.d_ff = 2 * d_model;
  c.d_img = 5;
  c.d_audio = 4;
  c.d_text = 6;
  c.dropout_p = 0.0;
  return c;
}

inline std::vector<const MultimodalSample*> pointers(const std::vector<MultimodalSample>& v) {
  std::vector<const MultimodalSample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("trifuse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace trifuse::testing
