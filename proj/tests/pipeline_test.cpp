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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rnndyn/config.hpp"
#include "rnndyn/pipeline.hpp"
#include "toycorpus.hpp"

using namespace rnndyn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rnndyn_pipeline_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

config::RunConfig small_config(const fs::path& dir) {
  config::RunConfig c;
  c.dataset = dir / "toy.jsonl";
  c.output = dir / "runs";
  c.grid.embed_dims = {4};
  c.grid.hidden_dims = {5};
  c.grid.seeds = 1;
  c.train.max_epochs = 3;
  c.fp.ic_count = 100;
  c.fp.max_iterations = 500;
  return c;
}

// Key paths of a JSON value, with array elements collapsed to "[]".
void key_paths(const pipeline::json& j, const std::string& prefix, std::set<std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      out.insert(prefix + "/" + it.key());
      key_paths(it.value(), prefix + "/" + it.key(), out);
    }
  } else if (j.is_array()) {
    for (const auto& e : j) key_paths(e, prefix + "[]", out);
  }
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
  auto c = config::load("");
  EXPECT_EQ(c.grid.cells, std::vector<model::CellType>{model::CellType::gru});
  EXPECT_EQ(c.grid.seeds, 10);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 5e-4);
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.patience, 2);
  EXPECT_EQ(c.fp.ic_count, 25000u);
  EXPECT_DOUBLE_EQ(c.fp.q_tolerance, 1e-8);
  EXPECT_DOUBLE_EQ(c.analysis.threshold, 0.95);
  EXPECT_EQ(c.grid.seed_list(), (std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(Config, FileOverridesAndErrors) {
  const auto dir = scratch("config");
  {
    std::ofstream os(dir / "run.yaml");
    os << "dataset: toy.jsonl\n"
          "workers: 2\n"
          "grid: {cells: [gru, lstm], embed_dims: [10, 16], hidden_dims: 8, seeds: 3}\n"
          "train: {learning_rate: 1.0e-3}\n"
          "analysis: {kmeans_init: uniform, fixed_points: all}\n";
  }
  auto c = config::load(dir / "run.yaml", {"train.patience=4", "grid.seeds=2"});
  EXPECT_EQ(c.dataset, fs::path("toy.jsonl"));
  EXPECT_EQ(c.workers, 2);
  EXPECT_EQ(c.fp.workers, 2);
  EXPECT_EQ(c.grid.cells.size(), 2u);
  EXPECT_EQ(c.grid.embed_dims, (std::vector<int>{10, 16}));
  EXPECT_EQ(c.grid.hidden_dims, std::vector<int>{8});
  EXPECT_EQ(c.grid.seeds, 2);
  EXPECT_EQ(c.train.patience, 4);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.analysis.kmeans_init, clusterkit::KMeansInit::uniform);
  EXPECT_EQ(c.analysis.fixed_points, config::FpScope::all);

  EXPECT_THROW(config::load(dir / "missing.yaml"), ConfigError);
  EXPECT_THROW(config::load("", {"train.learnig_rate=1"}), ConfigError);
  EXPECT_THROW(config::load("", {"bogus=1"}), ConfigError);
  EXPECT_THROW(config::load("", {"train.patience=abc"}), ConfigError);
  EXPECT_THROW(config::load("", {"grid.cells=[rnn2]"}), ConfigError);
  EXPECT_THROW(config::load("", {"grid.hidden_dims=[]"}), ConfigError);
  EXPECT_THROW(config::load("", {"workers=0"}), ConfigError);
  EXPECT_THROW(config::load("", {"analysis.threshold=1.5"}), ConfigError);
  EXPECT_THROW(config::load("", {"noequals"}), ConfigError);
  {
    std::ofstream os(dir / "bad.yaml");
    os << "grid: [1, 2\n";
  }
  EXPECT_THROW(config::load(dir / "bad.yaml"), ConfigError);
}

TEST(Config, EveryKeyRoundTrips) {
  // Each dotted key is accepted as an override and appears in the JSON dump.
  const auto j = config::to_json(config::load(""));
  for (const auto& key : config::keys()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      EXPECT_TRUE(j.contains(key)) << key;
    } else {
      EXPECT_TRUE(j.at(key.substr(0, dot)).contains(key.substr(dot + 1))) << key;
    }
    std::string value = j.contains(key) ? j.at(key).dump()
                                        : j.at(key.substr(0, dot)).at(key.substr(dot + 1)).dump();
    EXPECT_NO_THROW(config::load("", {key + "=" + value})) << key << "=" << value;
  }
}

TEST(Grid, MedianAndSpecs) {
  EXPECT_EQ(pipeline::median({4, 5, 5}), 5.0);
  EXPECT_EQ(pipeline::median({5, 4}), 4.5);
  EXPECT_THROW(pipeline::median({}), std::invalid_argument);
  config::GridSpec g;
  g.cells = {model::CellType::gru, model::CellType::lstm};
  g.embed_dims = {10, 16};
  g.hidden_dims = {10, 16};
  g.seeds = 3;
  EXPECT_EQ(pipeline::grid_specs(g).size(), 24u);
  EXPECT_EQ(pipeline::run_dir("out", model::CellType::gru, 16, 10, 3), fs::path("out/gru_16_10/3"));
}

TEST(Grid, RunQueueOrderIndependentOfWorkers) {
  std::function<int(std::size_t)> job = [](std::size_t i) { return static_cast<int>(i * i); };
  EXPECT_EQ(pipeline::run_queue<int>(20, 1, job), pipeline::run_queue<int>(20, 4, job));
  std::function<int(std::size_t)> bad = [](std::size_t i) -> int {
    if (i == 3) throw DataError("boom");
    return 0;
  };
  EXPECT_THROW(pipeline::run_queue<int>(6, 2, bad), DataError);
}

TEST(Prepare, VocabularyFromTrainingSplitOnly) {
  const auto dir = scratch("prepare");
  auto cfg = small_config(dir);
  testdata::write_toy_corpus(cfg.dataset, 30, 1);
  const auto d = pipeline::prepare_data(cfg);
  EXPECT_EQ(d.labels.size(), 7u);
  EXPECT_EQ(d.split.train.size() + d.split.val.size() + d.split.test.size(), 210u);
  std::set<std::string> train_tokens;
  for (auto i : d.split.train)
    for (const auto& t : corpus::normalize(d.corpus.utterances[i].text)) train_tokens.insert(t);
  for (std::size_t id = 2; id < d.vocab.size(); ++id) EXPECT_TRUE(train_tokens.count(d.vocab.token(static_cast<int>(id))));

  cfg.dataset = dir / "nothing.jsonl";
  EXPECT_THROW(pipeline::prepare_data(cfg), DataError);
}

TEST(Analyze, ZeroWeightModelIsDegenerate) {
  const auto dir = scratch("zero");
  auto cfg = small_config(dir);
  testdata::write_toy_corpus(cfg.dataset, 20, 2);
  const auto d = pipeline::prepare_data(cfg);
  model::ModelConfig mc;
  mc.embed_dim = 4;
  mc.hidden_dim = 5;
  mc.vocab_size = static_cast<int>(d.vocab.size());
  mc.n_classes = 7;
  const auto p = model::ModelParams::zeros(mc);
  const auto a = pipeline::analyze_run(cfg, d, p, dir / "zero", true, pipeline::Log(nullptr));
  EXPECT_EQ(a.dims.d, 1);
  EXPECT_TRUE(a.dims.degenerate);
  EXPECT_TRUE(a.report["dimensionality"]["degenerate"].get<bool>());
  ASSERT_TRUE(a.census.has_value());
  EXPECT_EQ(a.census->summary.stable, 1u);
  for (const char* f : {"report.json", "variance.csv", "variance.svg", "proj2d.csv", "proj2d.svg", "trajectories.csv",
                        "silhouette.csv", "cosine.csv", "fp_census.csv", "fp_radii.csv", "fixed_points.svg"})
    EXPECT_TRUE(fs::exists(dir / "zero" / f)) << f;
}

TEST(Analyze, TrainedRunIsReproducibleAndSchemaStable) {
  const auto dir = scratch("trained");
  auto cfg = small_config(dir);
  testdata::write_toy_corpus(cfg.dataset, 30, 3);
  const auto d = pipeline::prepare_data(cfg);
  const pipeline::Log quiet(nullptr);
  const auto run = pipeline::train_run(cfg, d, {model::CellType::gru, 4, 5, 0}, quiet);
  EXPECT_EQ(run.dir, cfg.output / "gru_4_5" / "0");
  const auto ck = model::load_checkpoint(run.dir / "checkpoint.txt");
  EXPECT_EQ(ck.labels, d.labels);

  const auto a = pipeline::analyze_run(cfg, d, ck.params, run.dir, true, quiet);
  const std::string first = slurp(run.dir / "report.json");
  pipeline::analyze_run(cfg, d, ck.params, run.dir, true, quiet);
  EXPECT_EQ(first, slurp(run.dir / "report.json"));

  // Without fixed points the same keys exist (null values).
  const auto b = pipeline::analyze_run(cfg, d, ck.params, dir / "nofp", false, quiet);
  EXPECT_TRUE(b.report["fixed_points"].is_null());
  std::set<std::string> ka, kb;
  for (auto it = a.report.begin(); it != a.report.end(); ++it) ka.insert(it.key());
  for (auto it = b.report.begin(); it != b.report.end(); ++it) kb.insert(it.key());
  EXPECT_EQ(ka, kb);

  // A different model (zero weights) yields the same nested key set.
  model::ModelParams z = model::ModelParams::zeros(ck.params.config);
  const auto c = pipeline::analyze_run(cfg, d, z, dir / "z", true, quiet);
  std::set<std::string> pa, pc;
  key_paths(a.report, "", pa);
  key_paths(c.report, "", pc);
  EXPECT_EQ(pa, pc);

  // Plot/CSV pairs agree on row counts.
  std::ifstream proj(run.dir / "proj2d.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(proj, line)) ++rows;
  EXPECT_EQ(rows - 1, static_cast<std::size_t>(a.report["dimensionality"]["states"].get<long>()));
}

TEST(Grid, TinyGridWritesHeatmapsAndAggregates) {
  const auto dir = scratch("grid");
  auto cfg = small_config(dir);
  cfg.grid.seeds = 2;
  cfg.workers = 2;
  testdata::write_toy_corpus(cfg.dataset, 20, 4);
  const auto d = pipeline::prepare_data(cfg);
  const pipeline::Log quiet(nullptr);
  const auto runs = pipeline::train_grid(cfg, d, quiet);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_NE(slurp(runs[0].dir / "checkpoint.txt"), slurp(runs[1].dir / "checkpoint.txt"));
  const auto cells = pipeline::analyze_grid(cfg, d, runs, quiet);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].seeds.size(), 2u);
  pipeline::write_grid_outputs(cfg.output, cfg.grid, cells);
  for (const char* f : {"grid_report.json", "grid.csv", "heatmap_gru_accuracy.svg", "heatmap_gru_accuracy.csv",
                        "heatmap_gru_dim.svg", "heatmap_gru_dim.csv"})
    EXPECT_TRUE(fs::exists(cfg.output / f)) << f;
  // Only the best seed gets a census under the default scope.
  int with_fp = 0;
  for (const auto& r : runs) with_fp += fs::exists(r.dir / "fp_census.csv") ? 1 : 0;
  EXPECT_EQ(with_fp, 1);
}
