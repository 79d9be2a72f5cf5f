// Copyright (c) 2026 The rnndyn Authors
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

// Run configuration: a YAML file with nested sections, overridable by
// dotted `section.key=value` assignments. Requires yaml-cpp.
//
//   dataset: data/snips.jsonl
//   output: runs
//   workers: 1
//   split:        {seed: 0, test_fraction: 0.2, val_fraction: 0.2}
//   vocab:        {max_tokens: 1000}
//   grid:         {cells: [gru], embed_dims: [16], hidden_dims: [16], seeds: 10, first_seed: 0}
//   train:        {learning_rate: 5.0e-4, batch_size: 32, patience: 2, max_epochs: 50}
//   fixed_points: {ic_count: 25000, q_tolerance: 1.0e-8, dedup_radius: 0.1, max_iterations: 5000,
//                  learning_rate: 1.0e-2, lr_decay: 1.0e-3, margin: 1.0e-3, seed: 0}
//   analysis:     {threshold: 0.95, kmeans_restarts: 10, kmeans_init: plus_plus, kmeans_seed: 0,
//                  fixed_points: best, export_states: false}

#pragma once

#include <yaml-cpp/yaml.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rnndyn/clusterkit.hpp"
#include "rnndyn/common.hpp"
#include "rnndyn/corpus.hpp"
#include "rnndyn/fixedpoints.hpp"
#include "rnndyn/model.hpp"
#include "rnndyn/train.hpp"

namespace rnndyn::config {

struct GridSpec {
  std::vector<model::CellType> cells{model::CellType::gru};
  std::vector<int> embed_dims{16};
  std::vector<int> hidden_dims{16};
  int seeds = 10;
  std::uint64_t first_seed = 0;

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> out;
    for (int i = 0; i < seeds; ++i) out.push_back(first_seed + static_cast<std::uint64_t>(i));
    return out;
  }
};

enum class FpScope { none, best, all };

struct AnalysisConfig {
  double threshold = 0.95;
  int kmeans_restarts = 10;
  clusterkit::KMeansInit kmeans_init = clusterkit::KMeansInit::plus_plus;
  std::uint64_t kmeans_seed = 0;
  FpScope fixed_points = FpScope::best;  // which grid runs get a fixed-point census
  bool export_states = false;            // write the full state sample (large)
};

struct RunConfig {
  std::filesystem::path dataset = "data/snips.jsonl";
  std::filesystem::path output = "runs";
  int workers = 1;
  corpus::SplitSpec split;
  std::size_t vocab_max_tokens = 1000;
  GridSpec grid;
  train::TrainConfig train;
  fixedpoints::FpConfig fp;
  AnalysisConfig analysis;

  void validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (grid.cells.empty() || grid.embed_dims.empty() || grid.hidden_dims.empty())
      throw ConfigError("grid: cells, embed_dims and hidden_dims must be non-empty");
    for (int d : grid.embed_dims)
      if (d < 1) throw ConfigError("grid.embed_dims must be positive");
    for (int d : grid.hidden_dims)
      if (d < 1) throw ConfigError("grid.hidden_dims must be positive");
    if (grid.seeds < 1) throw ConfigError("grid.seeds must be >= 1");
    if (vocab_max_tokens < 1) throw ConfigError("vocab.max_tokens must be >= 1");
    if (!(split.test_fraction > 0 && split.test_fraction < 1 && split.val_fraction_of_train > 0 &&
          split.val_fraction_of_train < 1))
      throw ConfigError("split fractions must lie in (0,1)");
    if (!(analysis.threshold > 0 && analysis.threshold <= 1)) throw ConfigError("analysis.threshold must be in (0,1]");
    if (analysis.kmeans_restarts < 1) throw ConfigError("analysis.kmeans_restarts must be >= 1");
    train.validate();
    fp.validate();
  }
};

inline std::string to_string(FpScope s) {
  switch (s) {
    case FpScope::none: return "none";
    case FpScope::best: return "best";
    case FpScope::all: return "all";
  }
  return "?";
}

inline std::string to_string(clusterkit::KMeansInit i) {
  return i == clusterkit::KMeansInit::uniform ? "uniform" : "plus_plus";
}

namespace detail {

// Allowed keys; anything else is reported as a config error so typos do not pass silently.
inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"", {"dataset", "output", "workers", "split", "vocab", "grid", "train", "fixed_points", "analysis"}},
      {"split", {"seed", "test_fraction", "val_fraction"}},
      {"vocab", {"max_tokens"}},
      {"grid", {"cells", "embed_dims", "hidden_dims", "seeds", "first_seed"}},
      {"train", {"learning_rate", "batch_size", "patience", "max_epochs"}},
      {"fixed_points",
       {"ic_count", "q_tolerance", "dedup_radius", "max_iterations", "learning_rate", "lr_decay", "newton_threshold",
        "stall_window", "margin", "seed"}},
      {"analysis", {"threshold", "kmeans_restarts", "kmeans_init", "kmeans_seed", "fixed_points", "export_states"}},
  };
  return s;
}

inline void check_keys(const YAML::Node& node, const std::string& section) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError((section.empty() ? std::string("config") : section) + " must be a mapping");
  const auto& allowed = schema().at(section);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown config key: " + (section.empty() ? key : section + "." + key));
    if (section.empty() && schema().count(key)) check_keys(kv.second, key);
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (!node || !node[key]) return;
  try {
    out = node[key].template as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for " + where + key);
  }
}

template <class T>
void read_list(const YAML::Node& node, const char* key, std::vector<T>& out, const std::string& where) {
  if (!node || !node[key]) return;
  const YAML::Node v = node[key];
  try {
    out.clear();
    if (v.IsSequence()) {
      for (const auto& e : v) out.push_back(e.as<T>());
    } else {
      out.push_back(v.as<T>());
    }
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for " + where + key);
  }
}

/// Applies "a.b=value" onto the YAML tree; the value is parsed as YAML (so lists work).
inline void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception&) {
    throw ConfigError("cannot parse override value: " + assignment);
  }
  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    root[path] = value;
  } else {
    const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
    if (key.find('.') != std::string::npos) throw ConfigError("config keys nest one level deep: " + path);
    if (!root[section]) root[section] = YAML::Node(YAML::NodeType::Map);
    YAML::Node s = root[section];
    s[key] = value;
  }
}

}  // namespace detail

/// Every settable key in dotted form ("workers", "train.learning_rate", ...).
inline std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& [section, names] : detail::schema()) {
    for (const auto& k : names) {
      if (section.empty() && detail::schema().count(k)) continue;
      out.push_back(section.empty() ? k : section + "." + k);
    }
  }
  return out;
}

inline RunConfig from_yaml(YAML::Node root) {
  detail::check_keys(root, "");
  RunConfig c;
  std::string dataset = c.dataset.string(), output = c.output.string();
  detail::read(root, "dataset", dataset, "");
  detail::read(root, "output", output, "");
  detail::read(root, "workers", c.workers, "");
  c.dataset = dataset;
  c.output = output;

  const YAML::Node split = root["split"];
  detail::read(split, "seed", c.split.seed, "split.");
  detail::read(split, "test_fraction", c.split.test_fraction, "split.");
  detail::read(split, "val_fraction", c.split.val_fraction_of_train, "split.");
  detail::read(root["vocab"], "max_tokens", c.vocab_max_tokens, "vocab.");

  const YAML::Node grid = root["grid"];
  std::vector<std::string> cells;
  detail::read_list(grid, "cells", cells, "grid.");
  if (!cells.empty()) {
    c.grid.cells.clear();
    for (const auto& name : cells) {
      try {
        c.grid.cells.push_back(model::parse_cell_type(name));
      } catch (const std::exception&) {
        throw ConfigError("grid.cells: unknown cell type " + name);
      }
    }
  }
  detail::read_list(grid, "embed_dims", c.grid.embed_dims, "grid.");
  detail::read_list(grid, "hidden_dims", c.grid.hidden_dims, "grid.");
  detail::read(grid, "seeds", c.grid.seeds, "grid.");
  detail::read(grid, "first_seed", c.grid.first_seed, "grid.");

  const YAML::Node tr = root["train"];
  detail::read(tr, "learning_rate", c.train.learning_rate, "train.");
  detail::read(tr, "batch_size", c.train.batch_size, "train.");
  detail::read(tr, "patience", c.train.patience, "train.");
  detail::read(tr, "max_epochs", c.train.max_epochs, "train.");

  const YAML::Node fp = root["fixed_points"];
  detail::read(fp, "ic_count", c.fp.ic_count, "fixed_points.");
  detail::read(fp, "q_tolerance", c.fp.q_tolerance, "fixed_points.");
  detail::read(fp, "dedup_radius", c.fp.dedup_radius, "fixed_points.");
  detail::read(fp, "max_iterations", c.fp.max_iterations, "fixed_points.");
  detail::read(fp, "learning_rate", c.fp.learning_rate, "fixed_points.");
  detail::read(fp, "lr_decay", c.fp.lr_decay, "fixed_points.");
  detail::read(fp, "newton_threshold", c.fp.newton_threshold, "fixed_points.");
  detail::read(fp, "stall_window", c.fp.stall_window, "fixed_points.");
  detail::read(fp, "margin", c.fp.margin, "fixed_points.");
  detail::read(fp, "seed", c.fp.seed, "fixed_points.");

  const YAML::Node an = root["analysis"];
  detail::read(an, "threshold", c.analysis.threshold, "analysis.");
  detail::read(an, "kmeans_restarts", c.analysis.kmeans_restarts, "analysis.");
  detail::read(an, "kmeans_seed", c.analysis.kmeans_seed, "analysis.");
  detail::read(an, "export_states", c.analysis.export_states, "analysis.");
  std::string init = to_string(c.analysis.kmeans_init), scope = to_string(c.analysis.fixed_points);
  detail::read(an, "kmeans_init", init, "analysis.");
  detail::read(an, "fixed_points", scope, "analysis.");
  if (init == "uniform") {
    c.analysis.kmeans_init = clusterkit::KMeansInit::uniform;
  } else if (init == "plus_plus") {
    c.analysis.kmeans_init = clusterkit::KMeansInit::plus_plus;
  } else {
    throw ConfigError("analysis.kmeans_init must be plus_plus or uniform");
  }
  if (scope == "none") {
    c.analysis.fixed_points = FpScope::none;
  } else if (scope == "best") {
    c.analysis.fixed_points = FpScope::best;
  } else if (scope == "all") {
    c.analysis.fixed_points = FpScope::all;
  } else {
    throw ConfigError("analysis.fixed_points must be none, best or all");
  }
  c.fp.workers = c.workers;
  c.validate();
  return c;
}

/// Loads `path` (empty path: all defaults) and applies overrides in order.
inline RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  YAML::Node root(YAML::NodeType::Map);
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    try {
      root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  }
  for (const auto& o : overrides) detail::apply_override(root, o);
  return from_yaml(root);
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["dataset"] = c.dataset.string();
  j["output"] = c.output.string();
  j["workers"] = c.workers;
  j["split"] = {{"seed", c.split.seed}, {"test_fraction", c.split.test_fraction}, {"val_fraction", c.split.val_fraction_of_train}};
  j["vocab"] = {{"max_tokens", c.vocab_max_tokens}};
  std::vector<std::string> cells;
  for (auto cell : c.grid.cells) cells.push_back(model::to_string(cell));
  j["grid"] = {{"cells", cells},
               {"embed_dims", c.grid.embed_dims},
               {"hidden_dims", c.grid.hidden_dims},
               {"seeds", c.grid.seeds},
               {"first_seed", c.grid.first_seed}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"patience", c.train.patience},
                {"max_epochs", c.train.max_epochs}};
  j["fixed_points"] = {{"ic_count", c.fp.ic_count},         {"q_tolerance", c.fp.q_tolerance},
                       {"dedup_radius", c.fp.dedup_radius}, {"max_iterations", c.fp.max_iterations},
                       {"learning_rate", c.fp.learning_rate}, {"lr_decay", c.fp.lr_decay},
                       {"newton_threshold", c.fp.newton_threshold}, {"stall_window", c.fp.stall_window},
                       {"margin", c.fp.margin},             {"seed", c.fp.seed}};
  j["analysis"] = {{"threshold", c.analysis.threshold},
                   {"kmeans_restarts", c.analysis.kmeans_restarts},
                   {"kmeans_init", to_string(c.analysis.kmeans_init)},
                   {"kmeans_seed", c.analysis.kmeans_seed},
                   {"fixed_points", to_string(c.analysis.fixed_points)},
                   {"export_states", c.analysis.export_states}};
  return j;
}

}  // namespace rnndyn::config
