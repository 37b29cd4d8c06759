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

#include "zipctl/commands.hpp"

#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "zipnet/checkpoint.hpp"
#include "zipnet/errors.hpp"
#include "zipnet/hash.hpp"
#include "zipnet/network.hpp"
#include "zipnet/pipeline.hpp"
#include "zipnet/train.hpp"

namespace zipctl {

using namespace zipnet;
using json = nlohmann::ordered_json;

namespace {

json config_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& key : RunConfig::keys()) j[key] = config.get(key);
  return j;
}

json report_summary(const RecallReport& r) {
  json j;
  for (int b : r.budgets) j[fmt::format("ar@{}", b)] = r.ar.at(b);
  for (auto bk : kBuckets) {
    const auto& v = r.ar_bucket[static_cast<int>(bk)];
    j[fmt::format("ar_{}@{}", bucket_name(bk), r.bucket_budget)] = v ? json(*v) : json();
  }
  return j;
}

fs::path split_dir(const fs::path& corpus, Split split) { return corpus / split_name(split); }

Dataset load_split(const fs::path& corpus, Split split) {
  const fs::path p = split_dir(corpus, split) / "annotations.json";
  if (!fs::exists(p)) {
    throw FormatError(fmt::format("corpus split '{}' not found at {}", split_name(split), p.string()));
  }
  return read_annotations(p);
}

}  // namespace

void write_manifest(const fs::path& dir, const std::string& command_line, const RunConfig& config,
                    std::uint64_t seed, const std::string& checkpoint_hash,
                    const std::string& extra_json) {
  json j;
  j["command"] = command_line;
  j["seed"] = seed;
  j["config"] = config_json(config);
  j["checkpoint_hash"] = checkpoint_hash;
  j["outputs"] = extra_json.empty() ? json::object() : json::parse(extra_json);
  fs::create_directories(dir);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

GenResult cmd_gen(const RunConfig& config, const fs::path& out) {
  config.synth.validate();
  GenResult r;
  for (Split s : {Split::kTrain, Split::kCal, Split::kEval}) {
    r.splits.emplace_back(s, generate_split(config.synth, s, out));
  }
  r.corpus_sha256 = tree_sha256(out);
  return r;
}

TrainResult cmd_train(const RunConfig& config, std::uint64_t seed, const fs::path& corpus,
                      const fs::path& out) {
  config.validate();
  const Dataset train = load_split(corpus, Split::kTrain);
  fs::create_directories(out);
  ZipNetwork<float> net(config.net, seed);
  Trainer trainer(net, train, config.train, config.assign, config.scale, seed + 1);
  std::ofstream log(out / "train_log.csv");
  log << "step,lr,loss\n";
  std::vector<double> losses;
  trainer.run([&](const StepStats& st) {
    log << fmt::format("{},{:.6g},{:.6f}\n", st.step, st.lr, st.total);
    losses.push_back(st.total);
  });
  TrainResult r;
  r.checkpoint = out / "model.zipc";
  write_checkpoint(r.checkpoint, net.state());
  r.checkpoint_hash = git_blob_hash_file(r.checkpoint);
  const std::size_t tail = std::min<std::size_t>(100, losses.size());
  if (tail > 0) {
    r.final_loss = std::accumulate(losses.end() - tail, losses.end(), 0.0) / tail;
  }
  std::ofstream cfg(out / "config.txt");
  cfg << config.to_text();
  return r;
}

ProposeResult cmd_propose(const RunConfig& config, const fs::path& checkpoint,
                          const fs::path& corpus, Split split, const fs::path& out_jsonl) {
  config.validate();
  ZipNetwork<float> net(config.net, 0);
  net.load_state(read_checkpoint(checkpoint));
  const Dataset cal = load_split(corpus, Split::kCal);
  const Dataset target = load_split(corpus, split);
  ProposeResult r;
  r.records = propose_and_finalize(net, cal, target, config.propose, &r.calibration);
  if (out_jsonl.has_parent_path()) fs::create_directories(out_jsonl.parent_path());
  write_proposals_jsonl(out_jsonl, r.records);
  write_calibration_json(out_jsonl.parent_path() / "calibration.json", r.calibration);
  return r;
}

RecallReport cmd_eval(const fs::path& proposals, const fs::path& annotations,
                      const std::vector<int>& budgets, int bucket_budget,
                      const fs::path& report_dir) {
  const auto records = read_proposals_jsonl(proposals);
  const Dataset ds = read_annotations(annotations);
  RecallReport r = evaluate(records, ds, budgets, bucket_budget);
  write_report_dir(report_dir, r);
  return r;
}

GradcheckSummary cmd_gradcheck(const RunConfig& config, std::uint64_t seed) {
  config.net.validate();
  GradcheckSummary s;
  s.checks = gradcheck_primitives(seed);
  if (config.net.use_mad) s.checks.push_back(gradcheck_mad_path(config.net, seed));
  s.checks.push_back(gradcheck_network(config.net, seed));
  for (const auto& c : s.checks) s.max_rel_error = std::max(s.max_rel_error, c.result.max_rel_error);
  return s;
}

AblateResult cmd_ablate(RunConfig config, const std::string& preset, std::uint64_t seed,
                        const fs::path& corpus, const fs::path& out) {
  apply_preset(config, preset);
  config.validate();
  if (!fs::exists(corpus / "train" / "annotations.json")) {
    spdlog::info("generating corpus under {}", corpus.string());
    cmd_gen(config, corpus);
  }
  AblateResult r;
  r.run_dir = out;
  r.train = cmd_train(config, seed, corpus, out);
  cmd_propose(config, r.train.checkpoint, corpus, Split::kEval, out / "proposals.jsonl");
  r.report = cmd_eval(out / "proposals.jsonl", corpus / "eval" / "annotations.json",
                      config.eval.budgets, config.eval.bucket_budget, out / "report");
  return r;
}

namespace {

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  std::vector<int> budgets;
  std::vector<int> scales;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const CommonFlags& f, const fs::path& fallback = {}) {
  RunConfig c;
  if (!f.config.empty()) {
    c = load_config(f.config);
  } else if (!fallback.empty() && fs::exists(fallback)) {
    c = load_config(fallback);
  }
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    }
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!f.budgets.empty()) {
    c.propose.budgets = f.budgets;
    c.eval.budgets = f.budgets;
  }
  if (!f.scales.empty()) c.propose.scales = f.scales;
  return c;
}

void add_common(CLI::App* sub, CommonFlags& f, bool seed = true) {
  sub->add_option("--config", f.config, "flat key = value config file");
  if (seed) sub->add_option("--seed", f.seed, "seed for every random choice");
  sub->add_option("--out", f.out, "output path")->required();
  sub->add_option("--budget", f.budgets, "proposal budgets")->delimiter(',');
  sub->add_option("--scales", f.scales, "test scales (longer image side)")->delimiter(',');
  sub->add_option("--set", f.overrides, "config override key=value (repeatable)");
}

std::string joined(int argc, char** argv) {
  std::vector<std::string> parts(argv, argv + argc);
  return fmt::format("{}", fmt::join(parts, " "));
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const IndexError*>(&e)) return "index";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "internal";
}

int exit_code(const std::string& kind) {
  if (kind == "config" || kind == "usage") return 2;
  if (kind == "format" || kind == "io") return 3;
  if (kind == "numeric") return 4;
  return 1;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"zoom-out-and-in region proposal toolkit"};
  app.require_subcommand(1);
  const std::string cmdline = joined(argc, argv);

  CommonFlags gen_f, train_f, prop_f, eval_f, grad_f, abl_f;
  std::string corpus, checkpoint, proposals, annotations, preset, split = "eval";

  auto* gen = app.add_subcommand("gen", "render the synthetic corpus");
  add_common(gen, gen_f);
  const CLI::Option* gen_seed = gen->get_option("--seed");

  auto* train = app.add_subcommand("train", "train a network on <corpus>/train");
  add_common(train, train_f);
  train->add_option("--corpus", corpus, "corpus directory")->required();

  auto* propose = app.add_subcommand("propose", "emit calibrated proposals as JSON lines");
  add_common(propose, prop_f);
  propose->add_option("--checkpoint", checkpoint, "model.zipc")->required();
  propose->add_option("--corpus", corpus, "corpus directory")->required();
  propose->add_option("--split", split, "split to propose on");

  auto* eval = app.add_subcommand("eval", "score proposals against annotations");
  add_common(eval, eval_f, false);
  eval->add_option("--proposals", proposals, "proposals.jsonl")->required();
  eval->add_option("--annotations", annotations, "annotations.json")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--config", grad_f.config, "flat key = value config file");
  grad->add_option("--seed", grad_f.seed, "seed for inputs and weights");
  grad->add_option("--set", grad_f.overrides, "config override key=value (repeatable)");

  auto* ablate = app.add_subcommand("ablate", "train, propose and evaluate one preset");
  add_common(ablate, abl_f);
  ablate->add_option("--preset", preset, "zoomout | split-anchors | zip-noMAD | zip-mad")->required();
  ablate->add_option("--corpus", corpus, "corpus directory (generated when missing)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (*gen) {
      RunConfig c = resolve_config(gen_f);
      if (gen_seed->count() > 0) c.synth.seed = gen_f.seed;
      const GenResult r = cmd_gen(c, gen_f.out);
      json outputs;
      outputs["corpus_sha256"] = r.corpus_sha256;
      for (const auto& [s, summary] : r.splits) {
        outputs[split_name(s)] = {{"images", summary.images},
                                  {"objects", summary.objects},
                                  {"dropped", summary.dropped}};
      }
      write_manifest(gen_f.out, cmdline, c, c.synth.seed, "", outputs.dump());
      out << fmt::format("corpus {} sha256 {}\n", gen_f.out, r.corpus_sha256);
    } else if (*train) {
      const RunConfig c = resolve_config(train_f);
      const TrainResult r = cmd_train(c, train_f.seed, corpus, train_f.out);
      json outputs{{"final_loss", r.final_loss}, {"checkpoint", r.checkpoint.filename().string()}};
      write_manifest(train_f.out, cmdline, c, train_f.seed, r.checkpoint_hash, outputs.dump());
      out << fmt::format("checkpoint {} ({})\n", r.checkpoint.string(), r.checkpoint_hash);
    } else if (*propose) {
      const RunConfig c = resolve_config(prop_f, fs::path(checkpoint).parent_path() / "config.txt");
      const ProposeResult r = cmd_propose(c, checkpoint, corpus, parse_split(split), prop_f.out);
      json outputs{{"images", r.records.size()}, {"bias", r.calibration.bias.b}};
      for (const auto& [b, t] : r.calibration.thresholds) outputs["nms_iou"][std::to_string(b)] = t;
      const fs::path dir = fs::path(prop_f.out).parent_path();
      write_manifest(dir.empty() ? fs::path(".") : dir, cmdline, c, prop_f.seed,
                     git_blob_hash_file(checkpoint), outputs.dump());
      out << fmt::format("wrote {} records to {}\n", r.records.size(), prop_f.out);
    } else if (*eval) {
      const RunConfig c = resolve_config(eval_f);
      const RecallReport r =
          cmd_eval(proposals, annotations, c.eval.budgets, c.eval.bucket_budget, eval_f.out);
      write_manifest(eval_f.out, cmdline, c, 0, "", report_summary(r).dump());
      out << ascii_curves(r);
    } else if (*grad) {
      const RunConfig c = resolve_config(grad_f);
      const GradcheckSummary s = cmd_gradcheck(c, grad_f.seed);
      for (const auto& check : s.checks) {
        out << fmt::format("{:<26} max_rel_error {:.3e}  ({} coords, {} at kinks)\n",
                           check.name, check.result.max_rel_error, check.result.coords_checked,
                           check.result.kink_coords);
      }
      out << fmt::format("max relative error {:.3e}\n", s.max_rel_error);
      if (s.max_rel_error > 1e-4) {
        print_error(err, "numeric",
                    fmt::format("gradient check failed: max relative error {:.3e} > 1e-4",
                                s.max_rel_error));
        return 4;
      }
    } else if (*ablate) {
      const RunConfig c = resolve_config(abl_f);
      const AblateResult r = cmd_ablate(c, preset, abl_f.seed, corpus, abl_f.out);
      RunConfig applied = c;
      apply_preset(applied, preset);
      write_manifest(abl_f.out, cmdline, applied, abl_f.seed, r.train.checkpoint_hash,
                     report_summary(r.report).dump());
      out << ascii_curves(r.report);
    }
  } catch (const std::exception& e) {
    const std::string kind = error_kind(e);
    print_error(err, kind, e.what());
    return exit_code(kind);
  }
  return 0;
}

}  // namespace zipctl
