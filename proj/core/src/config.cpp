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

#include "zipnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(fmt::format("config key '{}': cannot parse '{}' as a number", key, v));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("config key '{}': expected a boolean, got '{}'", key, v));
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  const std::string v = trim(text);
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

template <typename T>
std::string list_text(const std::vector<T>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

struct Entry {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Entry number(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_number<T>(k, v);
          },
          [access](const RunConfig& c) {
            return fmt::format("{}", access(const_cast<RunConfig&>(c)));
          }};
}

template <typename Access>
Entry boolean(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_bool(k, v);
          },
          [access](const RunConfig& c) {
            return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename T, typename Access>
Entry list(Access access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_list<T>(k, v);
          },
          [access](const RunConfig& c) { return list_text(access(const_cast<RunConfig&>(c))); }};
}

const std::vector<std::pair<std::string, Entry>>& registry() {
  static const std::vector<std::pair<std::string, Entry>> table = [] {
    std::vector<std::pair<std::string, Entry>> t;
    auto add = [&t](const std::string& k, Entry e) { t.emplace_back(k, std::move(e)); };
    // network
    add("net.stem_channels", number<int>([](RunConfig& c) -> int& { return c.net.stem_channels; }));
    add("net.level1_channels", number<int>([](RunConfig& c) -> int& { return c.net.level_channels[0]; }));
    add("net.level2_channels", number<int>([](RunConfig& c) -> int& { return c.net.level_channels[1]; }));
    add("net.level3_channels", number<int>([](RunConfig& c) -> int& { return c.net.level_channels[2]; }));
    add("net.blocks_per_stage", number<int>([](RunConfig& c) -> int& { return c.net.blocks_per_stage; }));
    add("net.rpn_channels", number<int>([](RunConfig& c) -> int& { return c.net.rpn_channels; }));
    add("net.lambda", number<int>([](RunConfig& c) -> int& { return c.net.lambda; }));
    add("net.num_classes", number<int>([](RunConfig& c) -> int& { return c.net.num_classes; }));
    add("net.topology",
        Entry{[](RunConfig& c, const std::string& k, const std::string& v) {
                const std::string s = trim(v);
                if (s == "zip") c.net.topology = Topology::kZip;
                else if (s == "zoom_out") c.net.topology = Topology::kZoomOut;
                else throw ConfigError(fmt::format("config key '{}': expected zip or zoom_out, got '{}'", k, s));
              },
              [](const RunConfig& c) {
                return std::string(c.net.topology == Topology::kZip ? "zip" : "zoom_out");
              }});
    add("net.use_mad", boolean([](RunConfig& c) -> bool& { return c.net.use_mad; }));
    add("net.anchor_placement",
        Entry{[](RunConfig& c, const std::string& k, const std::string& v) {
                const std::string s = trim(v);
                if (s == "split") c.net.placement = AnchorPlacement::kSplit;
                else if (s == "top") c.net.placement = AnchorPlacement::kTop;
                else throw ConfigError(fmt::format("config key '{}': expected split or top, got '{}'", k, s));
              },
              [](const RunConfig& c) {
                return std::string(c.net.placement == AnchorPlacement::kSplit ? "split" : "top");
              }});
    add("net.anchor_ratios", list<double>([](RunConfig& c) -> std::vector<double>& { return c.net.anchor_ratios; }));
    add("net.anchor_scales1", list<double>([](RunConfig& c) -> std::vector<double>& { return c.net.anchor_scales[0]; }));
    add("net.anchor_scales2", list<double>([](RunConfig& c) -> std::vector<double>& { return c.net.anchor_scales[1]; }));
    add("net.anchor_scales3", list<double>([](RunConfig& c) -> std::vector<double>& { return c.net.anchor_scales[2]; }));
    add("net.cls_weight", number<double>([](RunConfig& c) -> double& { return c.net.cls_weight; }));
    add("net.reg_weight", number<double>([](RunConfig& c) -> double& { return c.net.reg_weight; }));
    add("net.mad_bias_init", number<double>([](RunConfig& c) -> double& { return c.net.mad_bias_init; }));
    // assignment
    add("assign.iou_pos", number<double>([](RunConfig& c) -> double& { return c.assign.iou_pos; }));
    add("assign.gray_low", number<double>([](RunConfig& c) -> double& { return c.assign.gray_low; }));
    add("assign.gray_high", number<double>([](RunConfig& c) -> double& { return c.assign.gray_high; }));
    add("assign.iou_neg", number<double>([](RunConfig& c) -> double& { return c.assign.iou_neg; }));
    add("assign.neg_to_pos_max", number<int>([](RunConfig& c) -> int& { return c.assign.neg_to_pos_max; }));
    add("assign.gray_fraction", number<double>([](RunConfig& c) -> double& { return c.assign.gray_fraction; }));
    add("assign.batch_cap", number<int>([](RunConfig& c) -> int& { return c.assign.batch_cap; }));
    add("assign.empty_neg_floor", number<int>([](RunConfig& c) -> int& { return c.assign.empty_neg_floor; }));
    // training scale
    add("scale.target_lo", number<double>([](RunConfig& c) -> double& { return c.scale.target_lo; }));
    add("scale.target_hi", number<double>([](RunConfig& c) -> double& { return c.scale.target_hi; }));
    add("scale.min_side", number<int>([](RunConfig& c) -> int& { return c.scale.min_side; }));
    add("scale.max_side", number<int>([](RunConfig& c) -> int& { return c.scale.max_side; }));
    // training
    add("train.steps", number<long>([](RunConfig& c) -> long& { return c.train.steps; }));
    add("train.lr", number<double>([](RunConfig& c) -> double& { return c.train.lr; }));
    add("train.momentum", number<double>([](RunConfig& c) -> double& { return c.train.momentum; }));
    add("train.weight_decay", number<double>([](RunConfig& c) -> double& { return c.train.weight_decay; }));
    add("train.dynamic_scale", boolean([](RunConfig& c) -> bool& { return c.train.dynamic_scale; }));
    add("train.flip", boolean([](RunConfig& c) -> bool& { return c.train.flip; }));
    add("train.clip_grad_norm", number<double>([](RunConfig& c) -> double& { return c.train.clip_grad_norm; }));
    add("train.log_every", number<int>([](RunConfig& c) -> int& { return c.train.log_every; }));
    // corpus
    add("synth.seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.synth.seed; }));
    add("synth.image_h", number<int>([](RunConfig& c) -> int& { return c.synth.image_h; }));
    add("synth.image_w", number<int>([](RunConfig& c) -> int& { return c.synth.image_w; }));
    add("synth.min_objects", number<int>([](RunConfig& c) -> int& { return c.synth.min_objects; }));
    add("synth.max_objects", number<int>([](RunConfig& c) -> int& { return c.synth.max_objects; }));
    add("synth.min_side", number<double>([](RunConfig& c) -> double& { return c.synth.min_side; }));
    add("synth.max_side", number<double>([](RunConfig& c) -> double& { return c.synth.max_side; }));
    add("synth.small_fraction", number<double>([](RunConfig& c) -> double& { return c.synth.small_fraction; }));
    add("synth.max_aspect", number<double>([](RunConfig& c) -> double& { return c.synth.max_aspect; }));
    add("synth.clutter", number<int>([](RunConfig& c) -> int& { return c.synth.clutter; }));
    add("synth.max_retries", number<int>([](RunConfig& c) -> int& { return c.synth.max_retries; }));
    add("synth.margin", number<int>([](RunConfig& c) -> int& { return c.synth.margin; }));
    add("synth.n_train", number<int>([](RunConfig& c) -> int& { return c.synth.n_train; }));
    add("synth.n_cal", number<int>([](RunConfig& c) -> int& { return c.synth.n_cal; }));
    add("synth.n_eval", number<int>([](RunConfig& c) -> int& { return c.synth.n_eval; }));
    // proposals
    add("propose.level_nms_iou", number<double>([](RunConfig& c) -> double& { return c.propose.level_nms_iou; }));
    add("propose.level_top_k", number<int>([](RunConfig& c) -> int& { return c.propose.level_top_k; }));
    add("propose.merge_pre_top_k", number<int>([](RunConfig& c) -> int& { return c.propose.merge_pre_top_k; }));
    add("propose.budgets", list<int>([](RunConfig& c) -> std::vector<int>& { return c.propose.budgets; }));
    add("propose.scales", list<int>([](RunConfig& c) -> std::vector<int>& { return c.propose.scales; }));
    add("propose.bias_lo", number<double>([](RunConfig& c) -> double& { return c.propose.bias_lo; }));
    add("propose.bias_hi", number<double>([](RunConfig& c) -> double& { return c.propose.bias_hi; }));
    add("propose.bias_step", number<double>([](RunConfig& c) -> double& { return c.propose.bias_step; }));
    add("propose.thresh_lo", number<double>([](RunConfig& c) -> double& { return c.propose.thresh_lo; }));
    add("propose.thresh_hi", number<double>([](RunConfig& c) -> double& { return c.propose.thresh_hi; }));
    add("propose.thresh_step", number<double>([](RunConfig& c) -> double& { return c.propose.thresh_step; }));
    add("propose.bias_search_iou", number<double>([](RunConfig& c) -> double& { return c.propose.bias_search_iou; }));
    add("propose.bias_budget", number<int>([](RunConfig& c) -> int& { return c.propose.bias_budget; }));
    // evaluation
    add("eval.budgets", list<int>([](RunConfig& c) -> std::vector<int>& { return c.eval.budgets; }));
    add("eval.bucket_budget", number<int>([](RunConfig& c) -> int& { return c.eval.bucket_budget; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& [k, e] : registry()) {
    if (k == key) return e;
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  find_entry(key).set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const { return find_entry(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, e] : registry()) out.push_back(k);
  return out;
}

void RunConfig::validate() const {
  net.validate();
  assign.validate();
  if (!(scale.target_lo > 0.0 && scale.target_hi >= scale.target_lo)) {
    throw ConfigError("scale.target_lo: need 0 < target_lo <= target_hi");
  }
  if (scale.min_side < 32 || scale.max_side < scale.min_side) {
    throw ConfigError("scale.min_side: need 32 <= min_side <= max_side");
  }
  train.validate();
  synth.validate();
  propose.validate();
  if (eval.budgets.empty()) throw ConfigError("eval.budgets: at least one budget is required");
  for (int b : eval.budgets) {
    if (b < 1) throw ConfigError(fmt::format("eval.budgets: budget {} must be >= 1", b));
  }
  if (eval.bucket_budget < 1) throw ConfigError("eval.bucket_budget: must be >= 1");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, e] : registry()) out += fmt::format("{} = {}\n", k, e.get(*this));
  return out;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("config line {}: expected 'key = value', got '{}'", lineno, line));
    }
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::vector<std::string> preset_names() {
  return {"zoomout", "split-anchors", "zip-noMAD", "zip-mad"};
}

void apply_preset(RunConfig& config, const std::string& preset) {
  ZipConfig& n = config.net;
  if (preset == "zoomout") {
    n.topology = Topology::kZoomOut;
    n.use_mad = false;
    n.placement = AnchorPlacement::kTop;
  } else if (preset == "split-anchors") {
    n.topology = Topology::kZoomOut;
    n.use_mad = false;
    n.placement = AnchorPlacement::kSplit;
  } else if (preset == "zip-noMAD") {
    n.topology = Topology::kZip;
    n.use_mad = false;
    n.placement = AnchorPlacement::kSplit;
  } else if (preset == "zip-mad") {
    n.topology = Topology::kZip;
    n.use_mad = true;
    n.placement = AnchorPlacement::kSplit;
  } else {
    throw ConfigError(fmt::format("unknown preset '{}' (expected {})", preset,
                                  fmt::join(preset_names(), ", ")));
  }
}

}  // namespace zipnet
