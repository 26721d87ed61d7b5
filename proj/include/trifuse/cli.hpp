// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trifuse/fusion.hpp"
#include "trifuse/training.hpp"

namespace trifuse {

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Everything a train or ablate run needs. Serialized as the JSON config
/// file; each field can be overridden on the command line.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path train_data;
  std::filesystem::path val_data;   // empty: same file as train_data
  std::filesystem::path test_data;  // empty: same file as train_data
  std::string train_split = "train";
  std::string val_split = "val";
  std::string test_split = "test";
  std::filesystem::path output_dir = "run";
  FusionMode ablation = FusionMode::full;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Runs one CLI invocation (args excludes the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trifuse
