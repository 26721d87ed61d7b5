// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trifuse/rng.hpp"

namespace trifuse {

using nlohmann::json;

namespace {

constexpr std::string_view kFormatName = "trifuse-mmds";
constexpr int kFormatVersion = 1;

std::string legal_labels() {
  std::string out;
  for (auto n : kEmotionNames) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

FeatureMatrix parse_matrix(const json& j, std::size_t expected_cols, const char* field) {
  if (!j.is_array() || j.empty()) {
    throw FormatError(std::string("field '") + field + "' must be a non-empty array of frames");
  }
  FeatureMatrix m;
  m.rows = j.size();
  m.cols = expected_cols;
  m.values.reserve(m.rows * m.cols);
  for (const auto& frame : j) {
    if (!frame.is_array()) throw FormatError(std::string("field '") + field + "' frame is not an array");
    if (frame.size() != expected_cols) {
      throw FormatError(std::string("field '") + field + "' frame has " +
                        std::to_string(frame.size()) + " values, header says " +
                        std::to_string(expected_cols));
    }
    for (const auto& v : frame) {
      if (!v.is_number()) throw FormatError(std::string("field '") + field + "' holds a non-number");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw FormatError(std::string("field '") + field + "' holds a non-finite value");
      m.values.push_back(x);
    }
  }
  return m;
}

json matrix_json(const FeatureMatrix& m) {
  json frames = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    frames.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return frames;
}

DatasetHeader parse_header(const json& j) {
  if (!j.is_object()) throw FormatError("header line is not a JSON object");
  if (j.value("format", std::string()) != kFormatName) {
    throw FormatError("header 'format' must be \"trifuse-mmds\"");
  }
  DatasetHeader h;
  h.version = j.at("version").get<int>();
  if (h.version != kFormatVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(h.version) + ", expected " +
                      std::to_string(kFormatVersion));
  }
  auto positive = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() <= 0) {
      throw FormatError(std::string("header field '") + key + "' must be a positive integer");
    }
    return static_cast<std::size_t>(j[key].get<long long>());
  };
  h.d_img = positive("d_img");
  h.d_audio = positive("d_audio");
  h.text_mode = parse_text_mode(j.at("text_mode").get<std::string>());
  if (h.text_mode == TextMode::embeddings) {
    h.d_text = positive("d_text");
  } else {
    h.vocab_size = positive("vocab_size");
    if (j.contains("d_text")) h.d_text = positive("d_text");
  }
  return h;
}

json header_json(const DatasetHeader& h, const std::map<std::string, std::vector<std::string>>& splits) {
  json j;
  j["format"] = kFormatName;
  j["version"] = h.version;
  j["d_img"] = h.d_img;
  j["d_audio"] = h.d_audio;
  j["text_mode"] = to_string(h.text_mode);
  if (h.text_mode == TextMode::embeddings || h.d_text > 0) j["d_text"] = h.d_text;
  if (h.text_mode == TextMode::tokens) j["vocab_size"] = h.vocab_size;
  const bool only_all = splits.size() == 1 && splits.begin()->first == "all";
  if (!splits.empty() && !only_all) j["splits"] = splits;
  return j;
}

MultimodalSample parse_sample(const json& j, const DatasetHeader& h) {
  if (!j.is_object()) throw FormatError("sample line is not a JSON object");
  MultimodalSample s;
  s.id = j.at("id").get<std::string>();
  if (j.contains("dialogue_id") && !j["dialogue_id"].is_null()) {
    s.dialogue_id = j["dialogue_id"].get<std::string>();
  }
  s.label = parse_emotion(j.at("label").get<std::string>());
  s.image.features = parse_matrix(j.at("img"), h.d_img, "img");
  s.audio.features = parse_matrix(j.at("audio"), h.d_audio, "audio");
  const bool has_emb = j.contains("text_emb");
  const bool has_tok = j.contains("text_tokens");
  if (has_emb == has_tok) {
    throw FormatError("sample must carry exactly one of 'text_emb' or 'text_tokens'");
  }
  if (h.text_mode == TextMode::embeddings) {
    if (!has_emb) throw FormatError("header text_mode is \"embeddings\" but sample has 'text_tokens'");
    s.text.embeddings = parse_matrix(j["text_emb"], h.d_text, "text_emb");
  } else {
    if (!has_tok) throw FormatError("header text_mode is \"tokens\" but sample has 'text_emb'");
    const auto& toks = j["text_tokens"];
    if (!toks.is_array() || toks.empty()) throw FormatError("'text_tokens' must be a non-empty array");
    std::vector<int> ids;
    for (const auto& t : toks) {
      if (!t.is_number_integer()) throw FormatError("'text_tokens' holds a non-integer");
      const long long v = t.get<long long>();
      if (v < 0 || static_cast<std::size_t>(v) >= h.vocab_size) {
        throw FormatError("token id " + std::to_string(v) + " outside vocab_size " +
                          std::to_string(h.vocab_size));
      }
      ids.push_back(static_cast<int>(v));
    }
    s.text.token_ids = std::move(ids);
  }
  return s;
}

}  // namespace

std::string_view to_string(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }

Emotion parse_emotion(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == name) return static_cast<Emotion>(i);
  }
  throw ValidationError("unknown label \"" + std::string(name) + "\"; legal labels are " +
                        legal_labels());
}

std::string_view to_string(TextMode m) { return m == TextMode::embeddings ? "embeddings" : "tokens"; }

TextMode parse_text_mode(std::string_view name) {
  if (name == "embeddings") return TextMode::embeddings;
  if (name == "tokens") return TextMode::tokens;
  throw ValidationError("unknown text_mode \"" + std::string(name) + "\" (expected embeddings|tokens)");
}

std::size_t TextSequence::length() const {
  if (embeddings) return embeddings->rows;
  if (token_ids) return token_ids->size();
  return 0;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(DatasetHeader header, std::vector<MultimodalSample> samples,
                 std::map<std::string, std::vector<std::string>> splits)
    : header_(header), samples_(std::move(samples)), splits_(std::move(splits)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!index_.emplace(samples_[i].id, i).second) {
      throw ValidationError("duplicate sample id \"" + samples_[i].id + "\"");
    }
  }
  if (splits_.empty()) {
    auto& all = splits_["all"];
    for (const auto& s : samples_) all.push_back(s.id);
  }
  validate();
}

void Dataset::check_sample(const MultimodalSample& s) const {
  auto fail = [&](const std::string& what) {
    throw ValidationError("sample \"" + s.id + "\": " + what);
  };
  if (s.image.features.rows == 0 || s.audio.features.rows == 0 || s.text.length() == 0) {
    fail("every modality needs at least one frame");
  }
  if (s.image.features.cols != header_.d_img) {
    fail("image dim " + std::to_string(s.image.features.cols) + " != header d_img " +
         std::to_string(header_.d_img));
  }
  if (s.audio.features.cols != header_.d_audio) {
    fail("audio dim " + std::to_string(s.audio.features.cols) + " != header d_audio " +
         std::to_string(header_.d_audio));
  }
  if (s.text.embeddings.has_value() == s.text.token_ids.has_value()) {
    fail("text must hold exactly one of embeddings or token ids");
  }
  if (header_.text_mode == TextMode::embeddings) {
    if (!s.text.embeddings) fail("dataset is in embeddings mode but sample has token ids");
    if (s.text.embeddings->cols != header_.d_text) {
      fail("text dim " + std::to_string(s.text.embeddings->cols) + " != header d_text " +
           std::to_string(header_.d_text));
    }
  } else {
    if (!s.text.token_ids) fail("dataset is in tokens mode but sample has embeddings");
    for (int t : *s.text.token_ids) {
      if (t < 0 || static_cast<std::size_t>(t) >= header_.vocab_size) {
        fail("token id " + std::to_string(t) + " outside vocab_size " +
             std::to_string(header_.vocab_size));
      }
    }
  }
}

void Dataset::validate() const {
  for (const auto& s : samples_) check_sample(s);
  std::set<std::string> seen;
  for (const auto& [name, ids] : splits_) {
    for (const auto& id : ids) {
      if (!index_.contains(id)) {
        throw ValidationError("split \"" + name + "\" lists unknown id \"" + id + "\"");
      }
      if (!seen.insert(id).second) {
        throw ValidationError("id \"" + id + "\" appears in more than one split entry");
      }
    }
  }
}

std::vector<const MultimodalSample*> Dataset::split(const std::string& name) const {
  auto it = splits_.find(name);
  if (it == splits_.end()) {
    std::string known;
    for (const auto& [n, _] : splits_) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown split \"" + name + "\" (available: " + known + ")");
  }
  std::vector<const MultimodalSample*> out;
  out.reserve(it->second.size());
  for (const auto& id : it->second) out.push_back(&samples_[index_.at(id)]);
  return out;
}

const MultimodalSample* Dataset::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &samples_[it->second];
}

// ---------------------------------------------------------------------------
// JSONL

Dataset parse_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::optional<DatasetHeader> header;
  std::map<std::string, std::vector<std::string>> splits;
  std::vector<MultimodalSample> samples;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!header) {
        header = parse_header(j);
        if (j.contains("splits")) {
          splits = j["splits"].get<std::map<std::string, std::vector<std::string>>>();
        }
        continue;
      }
      MultimodalSample s = parse_sample(j, *header);
      if (!ids.insert(s.id).second) throw ValidationError("duplicate sample id \"" + s.id + "\"");
      samples.push_back(std::move(s));
    } catch (const Error& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw FormatError("dataset has no header line");
  return Dataset(*header, std::move(samples), std::move(splits));
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

std::string sample_to_json_line(const MultimodalSample& s) {
  json j;
  j["id"] = s.id;
  if (s.dialogue_id) j["dialogue_id"] = *s.dialogue_id;
  j["label"] = to_string(s.label);
  j["img"] = matrix_json(s.image.features);
  j["audio"] = matrix_json(s.audio.features);
  if (s.text.embeddings) j["text_emb"] = matrix_json(*s.text.embeddings);
  if (s.text.token_ids) j["text_tokens"] = *s.text.token_ids;
  return j.dump();
}

std::string to_jsonl(const Dataset& dataset) {
  std::string out = header_json(dataset.header(), dataset.splits()).dump();
  out += '\n';
  for (const auto& s : dataset.samples()) {
    out += sample_to_json_line(s);
    out += '\n';
  }
  return out;
}

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write dataset " + path.string());
  out << to_jsonl(dataset);
  if (!out) throw FormatError("write failed for " + path.string());
}

MultimodalSample parse_sample_line(std::string_view line, const DatasetHeader& header) {
  try {
    return parse_sample(json::parse(line), header);
  } catch (const json::exception& e) {
    throw FormatError(std::string("sample line: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthSpec::validate() const {
  auto bad = [](const std::string& msg) { throw ValidationError("synthetic spec: " + msg); };
  if (n_samples < kNumClasses) bad("n_samples must be >= 7, got " + std::to_string(n_samples));
  if (d_img == 0 || d_audio == 0) bad("feature dims must be positive");
  if (text_mode == TextMode::embeddings && d_text == 0) bad("d_text must be positive");
  if (text_mode == TextMode::tokens && vocab_size < kNumClasses) bad("vocab_size must be >= 7");
  if (min_len == 0 || min_len > max_len) bad("sequence lengths need 1 <= min_len <= max_len");
  for (double x : informativeness) {
    if (!(x >= 0.0 && x <= 1.0)) bad("informativeness values must lie in [0, 1], got " + std::to_string(x));
  }
  if (!(separation >= 0.0) || !std::isfinite(separation)) bad("separation must be finite and >= 0");
  if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0)) {
    bad("val/test fractions must be >= 0 and sum below 1");
  }
}

namespace {

FeatureMatrix gaussian_frames(std::size_t len, std::size_t dim, int label, double shift, Rng& rng) {
  FeatureMatrix m{len, dim, std::vector<double>(len * dim)};
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double mu = (j % kNumClasses == static_cast<std::size_t>(label)) ? shift : 0.0;
      m.values[t * dim + j] = mu + rng.normal();
    }
  }
  return m;
}

std::vector<int> class_tokens(std::size_t len, std::size_t vocab, int label, double info, Rng& rng) {
  // Tokens whose id % 7 == label form the class bucket.
  const std::size_t bucket = (vocab - static_cast<std::size_t>(label) + kNumClasses - 1) / kNumClasses;
  std::vector<int> ids(len);
  for (auto& id : ids) {
    if (rng.bernoulli(info)) {
      id = static_cast<int>(rng.below(bucket) * kNumClasses + static_cast<std::size_t>(label));
    } else {
      id = static_cast<int>(rng.below(vocab));
    }
  }
  return ids;
}

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.n_samples)));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.n_samples)));
  const std::size_t n_train = spec.n_samples - n_val - n_test;

  DatasetHeader header;
  header.d_img = spec.d_img;
  header.d_audio = spec.d_audio;
  header.text_mode = spec.text_mode;
  if (spec.text_mode == TextMode::embeddings) {
    header.d_text = spec.d_text;
  } else {
    header.vocab_size = spec.vocab_size;
  }

  std::vector<MultimodalSample> samples;
  std::map<std::string, std::vector<std::string>> splits;
  const std::array<std::pair<const char*, std::size_t>, 3> plan = {
      {{"train", n_train}, {"val", n_val}, {"test", n_test}}};
  std::size_t next_id = 0;
  for (const auto& [name, count] : plan) {
    if (count == 0) continue;
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % kNumClasses);
    rng.shuffle(labels);
    auto& ids = splits[name];
    for (int label : labels) {
      MultimodalSample s;
      char buf[32];
      std::snprintf(buf, sizeof buf, "s%05zu", next_id++);
      s.id = buf;
      s.label = static_cast<Emotion>(label);
      auto draw_len = [&] { return spec.min_len + rng.below(spec.max_len - spec.min_len + 1); };
      s.image.features = gaussian_frames(draw_len(), spec.d_img, label,
                                         spec.separation * spec.informativeness[0], rng);
      s.audio.features = gaussian_frames(draw_len(), spec.d_audio, label,
                                         spec.separation * spec.informativeness[1], rng);
      if (spec.text_mode == TextMode::embeddings) {
        s.text.embeddings = gaussian_frames(draw_len(), spec.d_text, label,
                                            spec.separation * spec.informativeness[2], rng);
      } else {
        s.text.token_ids = class_tokens(draw_len(), spec.vocab_size, label, spec.informativeness[2], rng);
      }
      ids.push_back(s.id);
      samples.push_back(std::move(s));
    }
  }
  return Dataset(header, std::move(samples), std::move(splits));
}

// ---------------------------------------------------------------------------
// Batching

namespace {

PaddedFeatures pad(std::span<const MultimodalSample* const> samples,
                   const FeatureMatrix& (*pick)(const MultimodalSample&)) {
  std::size_t max_len = 0;
  std::vector<std::size_t> lengths;
  const std::size_t dim = pick(*samples[0]).cols;
  for (const auto* s : samples) {
    const auto& m = pick(*s);
    if (m.cols != dim) {
      throw DimensionError("collate: feature dims differ within batch (" + std::to_string(m.cols) +
                           " vs " + std::to_string(dim) + ")");
    }
    lengths.push_back(m.rows);
    max_len = std::max(max_len, m.rows);
  }
  PaddedFeatures out{Tensor({samples.size(), max_len, dim}), Mask::from_lengths(lengths, max_len)};
  auto v = out.features.values_mut();
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& m = pick(*samples[b]);
    std::copy(m.values.begin(), m.values.end(),
              v.begin() + static_cast<std::ptrdiff_t>(b * max_len * dim));
  }
  return out;
}

}  // namespace

Batch collate(std::span<const MultimodalSample* const> samples, TextMode text_mode) {
  if (samples.empty()) throw DegenerateInputError("collate: empty batch");
  Batch batch;
  batch.text_mode = text_mode;
  batch.image = pad(samples, [](const MultimodalSample& s) -> const FeatureMatrix& {
    return s.image.features;
  });
  batch.audio = pad(samples, [](const MultimodalSample& s) -> const FeatureMatrix& {
    return s.audio.features;
  });
  if (text_mode == TextMode::embeddings) {
    for (const auto* s : samples) {
      if (!s->text.embeddings) throw ValidationError("collate: sample \"" + s->id + "\" lacks text embeddings");
    }
    batch.text = pad(samples, [](const MultimodalSample& s) -> const FeatureMatrix& {
      return *s.text.embeddings;
    });
  } else {
    std::size_t max_len = 0;
    std::vector<std::size_t> lengths;
    for (const auto* s : samples) {
      if (!s->text.token_ids) throw ValidationError("collate: sample \"" + s->id + "\" lacks text tokens");
      lengths.push_back(s->text.token_ids->size());
      max_len = std::max(max_len, lengths.back());
    }
    batch.text_token_mask = Mask::from_lengths(lengths, max_len);
    batch.text_tokens.assign(samples.size() * max_len, 0);
    for (std::size_t b = 0; b < samples.size(); ++b) {
      const auto& toks = *samples[b]->text.token_ids;
      std::copy(toks.begin(), toks.end(),
                batch.text_tokens.begin() + static_cast<std::ptrdiff_t>(b * max_len));
    }
  }
  for (const auto* s : samples) batch.labels.push_back(code(s->label));
  return batch;
}

std::vector<Batch> make_batches(std::span<const MultimodalSample* const> samples,
                                std::size_t batch_size, TextMode text_mode, Rng* rng) {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  std::vector<const MultimodalSample*> order(samples.begin(), samples.end());
  if (rng) rng->shuffle(order);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    out.push_back(collate(std::span(order).subspan(start, n), text_mode));
  }
  return out;
}

}  // namespace trifuse
