// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trifuse/training.hpp"

namespace trifuse {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'I', 'F', 'U', 'S', 'E', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  const char* take(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    const char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(take(n), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const CheckpointData& data) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(data.meta.dump());
  w.u32(static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& [name, t] : data.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u64(e);
    for (double v : t.values()) w.f64(v);
  }
  w.str(data.rng_state);
  return w.take();
}

CheckpointData decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a trifuse checkpoint (bad magic, expected \"TRIFUSE1\")");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported; this build reads version " +
                       std::to_string(kCheckpointVersion));
  }
  CheckpointData data;
  try {
    data.meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 3) throw FormatError("tensor " + name + " has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = r.f64();
    data.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  data.rng_state = r.str();
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return data;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(data);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

void append_model(CheckpointData& data, const Model& model, const std::string& prefix) {
  for (const auto& p : model.parameters()) data.tensors.emplace_back(prefix + p.name, p.tensor.detach());
}

Model model_from_checkpoint(const CheckpointData& data, const std::string& prefix) {
  ModelConfig config;
  FusionMode mode = FusionMode::full;
  try {
    config = data.meta.at("model").get<ModelConfig>();
    mode = parse_fusion_mode(data.meta.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Rng scratch(0);
  Model model = Model::init(config, mode, scratch);
  for (const auto& p : model.parameters()) {
    const Tensor* stored = data.find(prefix + p.name);
    if (!stored) throw FormatError("checkpoint lacks tensor " + prefix + p.name);
    if (stored->shape() != p.tensor.shape()) {
      throw FormatError("checkpoint tensor " + prefix + p.name + " has shape " +
                        shape_string(stored->shape()) + ", model expects " +
                        shape_string(p.tensor.shape()));
    }
    Tensor dst = p.tensor;
    std::copy(stored->values().begin(), stored->values().end(), dst.values_mut().begin());
  }
  return model;
}

namespace {

nlohmann::json model_meta(const Model& model) {
  return {{"format", "trifuse-ckpt"},
          {"precision", "f64"},
          {"model", model.config()},
          {"mode", to_string(model.mode())}};
}

}  // namespace

void save_model(const std::filesystem::path& path, const Model& model) {
  CheckpointData data;
  data.meta = model_meta(model);
  append_model(data, model, "best/");
  write_checkpoint(path, data);
}

Model load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(read_checkpoint(path), "best/");
}

// ---------------------------------------------------------------------------
// Trainer persistence

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointData data;
  data.meta = model_meta(model_);
  data.meta["train"] = config_;
  data.meta["epoch"] = epoch_;
  data.meta["optimizer_step"] = opt_.step;
  data.meta["best_f1"] = best_f1_ ? nlohmann::json(*best_f1_) : nlohmann::json(nullptr);
  data.meta["best_epoch"] = best_epoch_;
  data.meta["stale_epochs"] = stale_epochs_;
  data.meta["stopped"] = stopped_;
  data.meta["logs"] = logs_;
  append_model(data, best_, "best/");
  append_model(data, model_, "param/");
  const auto params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    data.tensors.emplace_back("adam_m/" + params[i].name, opt_.m[i].detach());
    data.tensors.emplace_back("adam_v/" + params[i].name, opt_.v[i].detach());
  }
  data.rng_state = rng_.state();
  write_checkpoint(path, data);
}

Trainer Trainer::resume(const std::filesystem::path& path, std::vector<const MultimodalSample*> train,
                        std::vector<const MultimodalSample*> val) {
  const CheckpointData data = read_checkpoint(path);
  if (!data.meta.contains("train")) throw FormatError("checkpoint holds no trainer state");
  return resume(path, std::move(train), std::move(val), data.meta["train"].get<TrainConfig>());
}

Trainer Trainer::resume(const std::filesystem::path& path, std::vector<const MultimodalSample*> train,
                        std::vector<const MultimodalSample*> val, const TrainConfig& config) {
  const CheckpointData data = read_checkpoint(path);
  if (!data.meta.contains("epoch") || !data.meta.contains("optimizer_step")) {
    throw FormatError("checkpoint holds no trainer state");
  }
  Rng rng;
  rng.set_state(data.rng_state);
  Trainer t(model_from_checkpoint(data, "param/"), std::move(train), std::move(val), config, rng);
  t.best_ = model_from_checkpoint(data, "best/");
  const auto params = t.model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto [prefix, dst] : {std::pair{"adam_m/", &t.opt_.m[i]}, std::pair{"adam_v/", &t.opt_.v[i]}}) {
      const Tensor* stored = data.find(prefix + params[i].name);
      if (!stored || stored->shape() != dst->shape()) {
        throw FormatError("checkpoint optimizer state missing or misshapen for " + params[i].name);
      }
      std::copy(stored->values().begin(), stored->values().end(), dst->values_mut().begin());
    }
  }
  const auto& m = data.meta;
  t.opt_.step = m.at("optimizer_step").get<std::uint64_t>();
  t.epoch_ = m.at("epoch").get<std::size_t>();
  if (m.at("best_f1").is_null()) {
    t.best_f1_.reset();
  } else {
    t.best_f1_ = m["best_f1"].get<double>();
  }
  t.best_epoch_ = m.at("best_epoch").get<std::size_t>();
  t.stale_epochs_ = m.at("stale_epochs").get<std::size_t>();
  t.stopped_ = m.at("stopped").get<bool>();
  t.logs_ = m.at("logs").get<std::vector<EpochLog>>();
  return t;
}

}  // namespace trifuse
