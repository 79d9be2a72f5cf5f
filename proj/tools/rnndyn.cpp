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

// rnndyn command-line driver.
//
//   rnndyn prepare --raw <snips dir | jsonl> --out data/snips.jsonl
//   rnndyn train   -c run.yaml [--grid.seeds 3 ...]
//   rnndyn analyze -c run.yaml --cell gru --embed 16 --hidden 16 --seed 0 [--with-fixed-points]
//   rnndyn grid    -c run.yaml
//   rnndyn fixed-points -c run.yaml --cell gru --embed 16 --hidden 16 --seed 0
//
// Every config key is also a flag (--train.learning_rate 1e-3); flags override
// the file and --set key=value overrides both. Exit codes: 0 ok, 2 config
// error, 3 data error, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "rnndyn/config.hpp"
#include "rnndyn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rnndyn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct ConfigFlags {
  std::string path;
  std::map<std::string, std::string> values;  // dotted key -> raw value
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "YAML run configuration");
    for (const auto& key : config::keys()) cmd->add_option("--" + key, values[key], "config key " + key);
    cmd->add_option("--set", sets, "override as key=value (repeatable)");
  }

  config::RunConfig load() const {
    std::vector<std::string> overrides;
    for (const auto& [key, value] : values)
      if (!value.empty()) overrides.push_back(key + "=" + value);
    overrides.insert(overrides.end(), sets.begin(), sets.end());
    return config::load(path, overrides);
  }
};

struct RunSelector {
  std::string cell = "gru";
  int embed = 16;
  int hidden = 16;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--cell", cell, "cell type (vanilla, gru, lstm)");
    cmd->add_option("--embed", embed, "embedding dimension");
    cmd->add_option("--hidden", hidden, "hidden dimension");
    cmd->add_option("--seed", seed, "training seed");
  }

  fs::path dir(const config::RunConfig& cfg) const {
    model::CellType c;
    try {
      c = model::parse_cell_type(cell);
    } catch (const std::exception&) {
      throw ConfigError("unknown cell type: " + cell);
    }
    return pipeline::run_dir(cfg.output, c, embed, hidden, seed);
  }
};

model::Checkpoint load_run(const fs::path& dir) {
  const fs::path ckpt = dir / "checkpoint.txt";
  if (!fs::exists(ckpt)) throw DataError("no checkpoint at " + ckpt.string() + " (run `rnndyn train` first)");
  return model::load_checkpoint(ckpt);
}

void check_labels(const model::Checkpoint& ck, const pipeline::PreparedData& d) {
  if (ck.labels != d.labels) throw DataError("checkpoint labels differ from the dataset labels");
}

int cmd_prepare(const std::string& raw, const std::string& out) {
  std::vector<corpus::Utterance> data;
  if (fs::is_directory(raw)) {
    data = corpus::convert_snips_raw(raw);
  } else {
    data = corpus::load_dataset(raw).utterances;
  }
  if (data.empty()) throw DataError("no utterances found in " + raw);
  for (auto& u : data) u.text = corpus::trim(u.text);
  if (!fs::path(out).parent_path().empty()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot write " + out);
  corpus::write_jsonl(os, data);
  std::cout << data.size() << " utterances -> " << out << '\n';
  for (const auto& c : corpus::class_balance(data))
    std::printf("  %-24s %6zu  %5.2f%%\n", c.label.c_str(), c.count, c.percent);
  return 0;
}

void announce(const pipeline::PreparedData& d) {
  std::cerr << "dataset: " << d.corpus.utterances.size() << " utterances, " << d.labels.size() << " labels, vocab "
            << d.vocab.size() << ", split " << d.split.train.size() << '/' << d.split.val.size() << '/'
            << d.split.test.size() << '\n';
  for (const auto& w : d.corpus.warnings) std::cerr << "warning: " << w << '\n';
}

void save_setup(const config::RunConfig& cfg, const pipeline::PreparedData& d) {
  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec || !fs::is_directory(cfg.output)) throw ConfigError("output directory not writable: " + cfg.output.string());
  pipeline::write_json(cfg.output / "config.json", config::to_json(cfg));
  pipeline::write_json(cfg.output / "dataset.json", pipeline::describe_prepared(d));
  auto os = pipeline::open_out(cfg.output / "vocab.tsv");
  d.vocab.write_tsv(os);
}

int cmd_train(const config::RunConfig& cfg, const pipeline::Log& log) {
  const auto d = pipeline::prepare_data(cfg);
  announce(d);
  save_setup(cfg, d);
  const auto runs = pipeline::train_grid(cfg, d, log);
  for (const auto& r : runs)
    std::cout << r.dir.string() << "  val_acc " << format_double(r.val_accuracy) << "  test_acc "
              << format_double(r.test_accuracy) << '\n';
  return 0;
}

int cmd_analyze(const config::RunConfig& cfg, const RunSelector& sel, bool with_fp, const pipeline::Log& log) {
  const fs::path dir = sel.dir(cfg);
  const auto ck = load_run(dir);
  const auto d = pipeline::prepare_data(cfg);
  check_labels(ck, d);
  const auto a = pipeline::analyze_run(cfg, d, ck.params, dir, with_fp, log);
  std::cout << a.report.dump(2) << '\n';
  return 0;
}

int cmd_fixed_points(const config::RunConfig& cfg, const RunSelector& sel, const pipeline::Log& log) {
  const fs::path dir = sel.dir(cfg);
  const auto ck = load_run(dir);
  const auto d = pipeline::prepare_data(cfg);
  check_labels(ck, d);
  const auto pca = statespace::fit_pca(statespace::collect_states(ck.params, d.test.examples,
                                                                  statespace::CollectMode::all));
  log("fixed points: " + std::to_string(cfg.fp.ic_count) + " initial states");
  const auto census = fixedpoints::fp_census(ck.params, d.test.examples, cfg.fp);
  const auto radii = fixedpoints::fp_radii(census.points, pca, 3);
  auto csv = pipeline::open_out(dir / "fp_census.csv");
  fixedpoints::write_census_csv(csv, census);
  pipeline::write_json(dir / "fp_census.json", fixedpoints::to_json(census));
  auto rc = pipeline::open_out(dir / "fp_radii.csv");
  fixedpoints::write_radii_csv(rc, radii);
  pipeline::json summary;
  summary["summary"] = fixedpoints::to_json(census.summary);
  summary["points"] = census.points.size();
  summary["all_verified"] = census.all_verified;
  summary["radii"] = fixedpoints::to_json(radii);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_grid(const config::RunConfig& cfg, const pipeline::Log& log) {
  const auto d = pipeline::prepare_data(cfg);
  announce(d);
  save_setup(cfg, d);
  const auto runs = pipeline::train_grid(cfg, d, log);
  const auto cells = pipeline::analyze_grid(cfg, d, runs, log);
  pipeline::write_grid_outputs(cfg.output, cfg.grid, cells);
  for (const auto& c : cells) {
    std::cout << pipeline::cell_name(c.cell, c.embed_dim, c.hidden_dim) << "  mean test_acc "
              << format_double(mean_std(c.test_accuracy).mean) << "  median d "
              << format_double(pipeline::median(std::vector<double>(c.dims.begin(), c.dims.end()))) << "  best seed "
              << c.best_seed << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train small recurrent intent classifiers and analyze their hidden-state dynamics"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output on stderr");

  std::string raw, out = "data/snips.jsonl";
  auto* prepare = app.add_subcommand("prepare", "normalize a SNIPS dump into a JSON-lines corpus");
  prepare->add_option("--raw", raw, "SNIPS directory or JSON-lines file")->required();
  prepare->add_option("--out", out, "output JSON-lines file");

  ConfigFlags train_flags, analyze_flags, grid_flags, fp_flags;
  RunSelector analyze_sel, fp_sel;
  bool with_fp = false;
  auto* train = app.add_subcommand("train", "train every (cell, embed, hidden, seed) of the grid");
  train_flags.attach(train);
  auto* analyze = app.add_subcommand("analyze", "analyze one trained run");
  analyze_flags.attach(analyze);
  analyze_sel.attach(analyze);
  analyze->add_flag("--with-fixed-points", with_fp, "also run the fixed-point census");
  auto* grid = app.add_subcommand("grid", "train and analyze the whole grid, then aggregate");
  grid_flags.attach(grid);
  auto* fixed = app.add_subcommand("fixed-points", "fixed-point census of one trained run");
  fp_flags.attach(fixed);
  fp_sel.attach(fixed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  std::ostream* sink = quiet ? nullptr : &std::cerr;
  const pipeline::Log log(sink);
  try {
    if (*prepare) return cmd_prepare(raw, out);
    if (*train) return cmd_train(train_flags.load(), log);
    if (*analyze) return cmd_analyze(analyze_flags.load(), analyze_sel, with_fp, log);
    if (*grid) return cmd_grid(grid_flags.load(), log);
    if (*fixed) return cmd_fixed_points(fp_flags.load(), fp_sel, log);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
