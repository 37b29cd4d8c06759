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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "zipnet/config.hpp"
#include "zipnet/gradcheck_suite.hpp"
#include "zipnet/metrics.hpp"
#include "zipnet/proposals.hpp"
#include "zipnet/synth.hpp"

namespace zipctl {

namespace fs = std::filesystem;

struct GenResult {
  std::string corpus_sha256;
  std::vector<std::pair<zipnet::Split, zipnet::GenerateSummary>> splits;
};

/// Renders the train, cal and eval splits under `out`.
GenResult cmd_gen(const zipnet::RunConfig& config, const fs::path& out);

struct TrainResult {
  fs::path checkpoint;
  std::string checkpoint_hash;  // git blob SHA-1
  double final_loss = 0.0;      // mean over the last 100 steps
};

/// Trains on <corpus>/train and writes model.zipc, config.txt and
/// train_log.csv under `out`.
TrainResult cmd_train(const zipnet::RunConfig& config, std::uint64_t seed, const fs::path& corpus,
                      const fs::path& out);

struct ProposeResult {
  zipnet::ProposalCalibration calibration;
  std::vector<zipnet::ProposalRecord> records;
};

/// Calibrates on <corpus>/cal and writes proposals for <corpus>/<split> to
/// `out_jsonl`, with calibration.json beside it.
ProposeResult cmd_propose(const zipnet::RunConfig& config, const fs::path& checkpoint,
                          const fs::path& corpus, zipnet::Split split, const fs::path& out_jsonl);

/// Scores a proposal file against annotations; writes report.json,
/// recall_grid.csv and curves.txt under `report_dir`.
zipnet::RecallReport cmd_eval(const fs::path& proposals, const fs::path& annotations,
                              const std::vector<int>& budgets, int bucket_budget,
                              const fs::path& report_dir);

struct GradcheckSummary {
  std::vector<zipnet::NamedGradcheck> checks;
  double max_rel_error = 0.0;
};

GradcheckSummary cmd_gradcheck(const zipnet::RunConfig& config, std::uint64_t seed);

struct AblateResult {
  TrainResult train;
  zipnet::RecallReport report;
  fs::path run_dir;
};

/// Applies `preset`, generates the corpus under `corpus` when it is
/// missing, then trains, proposes on the eval split and evaluates inside
/// <out>.
AblateResult cmd_ablate(zipnet::RunConfig config, const std::string& preset, std::uint64_t seed,
                        const fs::path& corpus, const fs::path& out);

/// Writes <dir>/manifest.json.
void write_manifest(const fs::path& dir, const std::string& command_line,
                    const zipnet::RunConfig& config, std::uint64_t seed,
                    const std::string& checkpoint_hash, const std::string& extra_json);

/// Full command-line entry point; returns the process exit code. Failures
/// print one JSON line {"error": kind, "message": text} to `err`.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace zipctl
