// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint layout (all integers little-endian):
//
//   "TRIFUSE1"                      8-byte magic
//   u32  format version             currently 1
//   u32  n, then n bytes            UTF-8 JSON: configs and trainer counters
//   u32  tensor count
//   per tensor:
//     u32 name length, name bytes   UTF-8
//     u32 rank, rank x u64 extents
//     product(extents) x f64        IEEE-754 binary64, little-endian
//   u32  n, then n bytes            RNG engine state (text form)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trifuse/fusion.hpp"

namespace trifuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string rng_state;

  const Tensor* find(const std::string& name) const;
};

std::string encode_checkpoint(const CheckpointData& data);
/// Throws FormatError on a bad magic or truncated file, VersionError on an
/// unsupported format version.
CheckpointData decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Rebuilds a model from the config in `meta` and the tensors stored under
/// `prefix` (e.g. "best/" or "param/").
Model model_from_checkpoint(const CheckpointData& data, const std::string& prefix);

/// Adds a model's parameters under `prefix`.
void append_model(CheckpointData& data, const Model& model, const std::string& prefix);

/// Model-only checkpoint; its parameters are stored as "best/".
void save_model(const std::filesystem::path& path, const Model& model);
/// Loads the best-validation parameters of any checkpoint.
Model load_model(const std::filesystem::path& path);

}  // namespace trifuse
