// Copyright 2026 The zipnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zipnet/assign.hpp"
#include "zipnet/network.hpp"
#include "zipnet/proposals.hpp"
#include "zipnet/synth.hpp"
#include "zipnet/train.hpp"

namespace zipnet {

struct EvalConfig {
  std::vector<int> budgets{10, 100, 500, 1000};
  int bucket_budget = 100;
};

/// Every tunable of a run. Text form is one `key = value` per line; `#`
/// starts a comment; lists are comma separated. Keys are grouped by prefix:
/// net.*, assign.*, scale.*, train.*, synth.*, propose.*, eval.*.
struct RunConfig {
  ZipConfig net;
  AssignmentConfig assign;
  TrainScaleConfig scale;
  TrainConfig train;
  SceneSpec synth;
  ProposalConfig propose;
  EvalConfig eval;

  /// Applies one `key = value` assignment. Throws ConfigError naming the key
  /// when it is unknown or the value does not parse.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Validates every section.
  void validate() const;
  /// Canonical text form, every key in a fixed order.
  std::string to_text() const;

  static std::vector<std::string> keys();
};

/// Parses the text form on top of `base` (defaults when omitted).
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Ablation presets: "zoomout", "split-anchors", "zip-noMAD", "zip-mad".
/// Throws ConfigError on unknown names.
void apply_preset(RunConfig& config, const std::string& preset);
std::vector<std::string> preset_names();

}  // namespace zipnet
