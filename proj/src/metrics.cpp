// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "trifuse/fusion.hpp"

namespace trifuse {

namespace {

void check_pair(std::span<const int> preds, std::span<const int> labels) {
  if (preds.empty() || labels.empty()) throw DegenerateInputError("metric over an empty input");
  if (preds.size() != labels.size()) {
    throw DimensionError("metric: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  for (auto v : {preds, labels}) {
    for (int c : v) {
      if (c < 0 || static_cast<std::size_t>(c) >= kNumClasses) {
        throw ValidationError("metric: class index " + std::to_string(c) + " outside [0, 7)");
      }
    }
  }
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based mean rank
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

std::string fmt_num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_pair(preds, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels) {
  check_pair(preds, labels);
  ConfusionMatrix cm{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++cm[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

std::array<ClassScores, kNumClasses> per_class_scores(const ConfusionMatrix& cm) {
  std::array<ClassScores, kNumClasses> out{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t tp = cm[c][c];
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      predicted += cm[k][c];
      actual += cm[c][k];
    }
    auto& s = out[c];
    s.support = actual;
    s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    s.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  return out;
}

double weighted_f1(std::span<const int> preds, std::span<const int> labels) {
  const auto scores = per_class_scores(confusion_matrix(preds, labels));
  double total = 0.0;
  for (const auto& s : scores) total += s.f1 * static_cast<double>(s.support);
  return total / static_cast<double>(labels.size());
}

double binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw DimensionError("binary_auc: length mismatch");
  const auto ranks = average_ranks(scores);
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += ranks[i];
    }
  }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw UndefinedMetricError("binary_auc: needs both positives and negatives");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double macro_auc(std::span<const double> probs, std::span<const int> labels) {
  if (labels.empty()) throw DegenerateInputError("macro_auc over an empty input");
  if (probs.size() != labels.size() * kNumClasses) {
    throw DimensionError("macro_auc: probs must be [n x 7]");
  }
  std::array<bool, kNumClasses> present{};
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= kNumClasses) {
      throw ValidationError("macro_auc: class index " + std::to_string(l) + " outside [0, 7)");
    }
    present[static_cast<std::size_t>(l)] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw UndefinedMetricError("macro_auc: fewer than 2 distinct classes present");
  }
  const std::size_t n = labels.size();
  std::vector<double> column(n);
  std::vector<std::uint8_t> positive(n);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!present[c]) continue;
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = probs[i * kNumClasses + c];
      positive[i] = static_cast<std::size_t>(labels[i]) == c;
    }
    total += binary_auc(column, positive);
    ++used;
  }
  return total / static_cast<double>(used);
}

EvalReport make_report(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() * kNumClasses) throw DimensionError("make_report: probs must be [n x 7]");
  std::vector<int> preds(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = probs.subspan(i * kNumClasses, kNumClasses);
    preds[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  EvalReport r;
  r.n_samples = labels.size();
  r.accuracy = accuracy(preds, labels);
  r.confusion = confusion_matrix(preds, labels);
  r.per_class = per_class_scores(r.confusion);
  r.weighted_f1 = weighted_f1(preds, labels);
  try {
    r.macro_auc = macro_auc(probs, labels);
  } catch (const UndefinedMetricError&) {
    r.macro_auc.reset();
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    loss += -std::log(std::max(probs[i * kNumClasses + static_cast<std::size_t>(labels[i])], kLogFloor));
  }
  r.mean_loss = loss / static_cast<double>(labels.size());
  return r;
}

EvalReport evaluate(const Model& model, std::span<const MultimodalSample* const> samples,
                    std::size_t batch_size) {
  if (samples.empty()) throw DegenerateInputError("evaluate: empty split");
  for (const auto* s : samples) check_compatible(model.config(), *s);
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(samples.size() * kNumClasses);
  for (const auto& batch : make_batches(samples, batch_size, model.config().text_mode, nullptr)) {
    Tape tape(Tape::Mode::inference);
    Pass pass{tape, false, 0.0, nullptr};
    auto r = forward_full(pass, model, batch);
    auto pv = r.probs.values();
    probs.insert(probs.end(), pv.begin(), pv.end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  return make_report(probs, labels);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["n_samples"] = r.n_samples;
  j["accuracy"] = r.accuracy;
  j["weighted_f1"] = r.weighted_f1;
  j["macro_auc"] = r.macro_auc ? nlohmann::json(*r.macro_auc) : nlohmann::json(nullptr);
  j["mean_loss"] = r.mean_loss;
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& s = r.per_class[c];
    per_class[std::string(kEmotionNames[c])] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  j["per_class"] = per_class;
  j["confusion"] = r.confusion;
  j["labels"] = kEmotionNames;
  return j;
}

void to_json(nlohmann::json& j, const EpochLog& e) {
  j = {{"epoch", e.epoch},       {"train_loss", e.train_loss}, {"val_acc", e.val_accuracy},
       {"val_f1", e.val_f1},     {"weight_image", e.weights[0]},      {"weight_audio", e.weights[1]},
       {"weight_text", e.weights[2]},    {"seconds", e.seconds}};
  j["val_auc"] = e.val_auc ? nlohmann::json(*e.val_auc) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, EpochLog& e) {
  e.epoch = j.at("epoch").get<std::size_t>();
  e.train_loss = j.at("train_loss").get<double>();
  e.val_accuracy = j.at("val_acc").get<double>();
  e.val_f1 = j.at("val_f1").get<double>();
  if (j.at("val_auc").is_null()) {
    e.val_auc.reset();
  } else {
    e.val_auc = j["val_auc"].get<double>();
  }
  e.weights = {j.at("weight_image").get<double>(), j.at("weight_audio").get<double>(), j.at("weight_text").get<double>()};
  e.seconds = j.at("seconds").get<double>();
}

std::string epoch_curve_csv(std::span<const EpochLog> logs) {
  std::string out = "epoch,train_loss,val_acc,val_f1,val_auc,alpha,beta,chi,seconds\n";
  for (const auto& e : logs) {
    out += std::to_string(e.epoch);
    for (double v : {e.train_loss, e.val_accuracy, e.val_f1,
                     e.val_auc.value_or(std::numeric_limits<double>::quiet_NaN()), e.weights[0],
                     e.weights[1], e.weights[2], e.seconds}) {
      out += ',';
      out += fmt_num(v);
    }
    out += '\n';
  }
  return out;
}

void export_epoch_curve(std::span<const EpochLog> logs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write curve file " + path.string());
  out << epoch_curve_csv(logs);
  if (!out) throw FormatError("write failed for " + path.string());
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("spearman: need two equal series of length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace trifuse
