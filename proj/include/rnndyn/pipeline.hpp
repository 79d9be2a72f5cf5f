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

// End-to-end runs: data preparation, per-seed training, analysis and artifact
// emission, and grid aggregation. Each run owns <out>/<cell>_<e>_<h>/<seed>/.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "rnndyn/clusterkit.hpp"
#include "rnndyn/config.hpp"
#include "rnndyn/corpus.hpp"
#include "rnndyn/fixedpoints.hpp"
#include "rnndyn/model.hpp"
#include "rnndyn/statespace.hpp"
#include "rnndyn/svg.hpp"
#include "rnndyn/train.hpp"

namespace rnndyn::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Logging sink shared by worker threads.
class Log {
 public:
  explicit Log(std::ostream* os = &std::cerr) : os_(os) {}
  void operator()(const std::string& line) const {
    if (!os_) return;
    std::lock_guard<std::mutex> lock(mu_);
    *os_ << line << '\n';
  }

 private:
  std::ostream* os_;
  mutable std::mutex mu_;
};

struct PreparedData {
  corpus::Corpus corpus;
  corpus::Split split;
  corpus::Vocab vocab;
  std::vector<std::string> labels;
  corpus::EncodeResult train, val, test;
  std::vector<corpus::Utterance> test_utterances;
};

/// Loads the corpus, splits it, builds the vocabulary on the training split and encodes all three parts.
inline PreparedData prepare_data(const config::RunConfig& cfg) {
  PreparedData d;
  d.corpus = corpus::load_dataset(cfg.dataset);
  if (d.corpus.utterances.size() < 5) throw DataError("dataset needs at least 5 utterances");
  d.labels = d.corpus.labels;
  d.split = corpus::split(d.corpus.utterances.size(), cfg.split);
  const auto train_u = corpus::gather(d.corpus.utterances, d.split.train);
  d.vocab = corpus::build_vocab(train_u, cfg.vocab_max_tokens);
  d.train = corpus::encode(train_u, d.vocab, d.labels);
  d.val = corpus::encode(corpus::gather(d.corpus.utterances, d.split.val), d.vocab, d.labels);
  d.test_utterances = corpus::gather(d.corpus.utterances, d.split.test);
  d.test = corpus::encode(d.test_utterances, d.vocab, d.labels);
  if (d.train.examples.empty() || d.val.examples.empty() || d.test.examples.empty())
    throw DataError("a split is empty after tokenization");
  return d;
}

inline std::string cell_name(model::CellType cell, int e, int h) {
  return model::to_string(cell) + "_" + std::to_string(e) + "_" + std::to_string(h);
}

inline fs::path run_dir(const fs::path& out, model::CellType cell, int e, int h, std::uint64_t seed) {
  return out / cell_name(cell, e, h) / std::to_string(seed);
}

inline std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

inline void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

inline json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("cannot read " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("malformed " + p.string() + ": " + e.what());
  }
}

struct RunSpec {
  model::CellType cell = model::CellType::gru;
  int embed_dim = 16;
  int hidden_dim = 16;
  std::uint64_t seed = 0;
};

struct TrainSummary {
  RunSpec spec;
  fs::path dir;
  int stopped_epoch = 0;
  int best_epoch = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double val_loss = 0.0;
};

inline json to_json(const TrainSummary& s) {
  json j;
  j["cell"] = model::to_string(s.spec.cell);
  j["embed_dim"] = s.spec.embed_dim;
  j["hidden_dim"] = s.spec.hidden_dim;
  j["seed"] = s.spec.seed;
  j["stopped_epoch"] = s.stopped_epoch;
  j["best_epoch"] = s.best_epoch;
  j["train_accuracy"] = s.train_accuracy;
  j["val_accuracy"] = s.val_accuracy;
  j["test_accuracy"] = s.test_accuracy;
  j["val_loss"] = s.val_loss;
  return j;
}

inline TrainSummary summary_from_json(const json& j, const fs::path& dir) {
  TrainSummary s;
  s.spec.cell = model::parse_cell_type(j.at("cell").get<std::string>());
  s.spec.embed_dim = j.at("embed_dim");
  s.spec.hidden_dim = j.at("hidden_dim");
  s.spec.seed = j.at("seed");
  s.dir = dir;
  s.stopped_epoch = j.at("stopped_epoch");
  s.best_epoch = j.at("best_epoch");
  s.train_accuracy = j.at("train_accuracy");
  s.val_accuracy = j.at("val_accuracy");
  s.test_accuracy = j.at("test_accuracy");
  s.val_loss = j.at("val_loss");
  return s;
}

/// Trains one (cell, e, h, seed) and writes checkpoint.txt, train_log.csv and train.json.
inline TrainSummary train_run(const config::RunConfig& cfg, const PreparedData& d, const RunSpec& spec,
                              const Log& log) {
  model::ModelConfig mc;
  mc.cell = spec.cell;
  mc.embed_dim = spec.embed_dim;
  mc.hidden_dim = spec.hidden_dim;
  mc.vocab_size = static_cast<int>(d.vocab.size());
  mc.n_classes = static_cast<int>(d.labels.size());
  mc.seed = spec.seed;
  train::TrainConfig tc = cfg.train;
  tc.seed = spec.seed;
  const std::string name = cell_name(spec.cell, spec.embed_dim, spec.hidden_dim) + "/" + std::to_string(spec.seed);
  auto result = train::train(mc, tc, d.train.examples, d.val.examples, [&](const train::EpochRecord& r) {
    log(name + " epoch " + std::to_string(r.epoch) + " train_loss " + format_double(r.train_loss) + " val_loss " +
        format_double(r.val_loss) + " val_acc " + format_double(r.val_accuracy));
  });

  TrainSummary s;
  s.spec = spec;
  s.dir = run_dir(cfg.output, spec.cell, spec.embed_dim, spec.hidden_dim, spec.seed);
  s.stopped_epoch = result.history.stopped_epoch;
  s.best_epoch = result.history.best_epoch;
  s.train_accuracy = train::evaluate(result.params, d.train.examples);
  s.val_accuracy = train::evaluate(result.params, d.val.examples);
  s.test_accuracy = train::evaluate(result.params, d.test.examples);
  s.val_loss = train::mean_loss(result.params, d.val.examples);

  fs::create_directories(s.dir);
  model::save_checkpoint(s.dir / "checkpoint.txt", result.params, d.labels);
  auto os = open_out(s.dir / "train_log.csv");
  result.history.write_csv(os);
  write_json(s.dir / "train.json", to_json(s));
  log(name + " done: test_acc " + format_double(s.test_accuracy));
  return s;
}

/// Runs `jobs` on a fixed number of worker threads; job i always writes slot i.
template <class T>
std::vector<T> run_queue(std::size_t count, int workers, const std::function<T(std::size_t)>& job) {
  std::vector<T> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(n, count); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<RunSpec> grid_specs(const config::GridSpec& g) {
  std::vector<RunSpec> out;
  for (auto cell : g.cells)
    for (int e : g.embed_dims)
      for (int h : g.hidden_dims)
        for (auto seed : g.seed_list()) out.push_back({cell, e, h, seed});
  return out;
}

inline std::vector<TrainSummary> train_grid(const config::RunConfig& cfg, const PreparedData& d, const Log& log) {
  const auto specs = grid_specs(cfg.grid);
  return run_queue<TrainSummary>(specs.size(), cfg.workers,
                                 [&](std::size_t i) { return train_run(cfg, d, specs[i], log); });
}

// ---------------------------------------------------------------------------
// Analysis of one trained model

struct AnalysisResult {
  json report;
  statespace::PcaModel pca;
  statespace::DimReport dims;
  double test_accuracy = 0.0;
  double silhouette_full = 0.0;
  double silhouette_topd = 0.0;
  double purity = 0.0;
  clusterkit::AlignmentReport alignment;
  MeanStd centroid_distance_full;
  MeanStd centroid_distance_topd;
  MeanStd centroid_norm_top3;
  std::optional<fixedpoints::Census> census;
  std::vector<fixedpoints::RadiusGroup> radii;
};

namespace detail {

inline void write_variance(const fs::path& dir, const statespace::PcaModel& pca, const statespace::DimReport& dims) {
  auto csv = open_out(dir / "variance.csv");
  csv << "component,ratio,cumulative\n";
  std::vector<double> xs, ys, th;
  for (Eigen::Index k = 0; k < pca.dim(); ++k) {
    csv << k + 1 << ',' << format_double(pca.explained_variance_ratio[k]) << ','
        << format_double(dims.cumulative[static_cast<std::size_t>(k)]) << '\n';
    xs.push_back(static_cast<double>(k + 1));
    ys.push_back(dims.cumulative[static_cast<std::size_t>(k)]);
    th.push_back(dims.threshold);
  }
  auto os = open_out(dir / "variance.svg");
  svg::lines(os, "Cumulative explained variance (d = " + std::to_string(dims.d) + ")", "components", "cumulative ratio",
             {{"cumulative", xs, ys, 0, false}, {"threshold", xs, th, 3, true}}, {"cumulative", "", "", "threshold"},
             {{static_cast<double>(dims.d), dims.cumulative[static_cast<std::size_t>(dims.d - 1)], 3, "circle"}});
}

inline void write_projection(const fs::path& dir, const std::string& stem, const Matrix& proj,
                             const statespace::StateSpaceSample& sample, const std::vector<std::string>& labels,
                             int xcol, int ycol) {
  auto csv = open_out(dir / (stem + ".csv"));
  csv << "row,sentence,timestep,label,final";
  for (Eigen::Index k = 0; k < proj.cols(); ++k) csv << ",pc" << k + 1;
  csv << '\n';
  std::vector<double> xs, ys;
  std::vector<int> groups;
  for (Eigen::Index r = 0; r < proj.rows(); ++r) {
    const auto& p = sample.provenance[static_cast<std::size_t>(r)];
    csv << r << ',' << p.sentence << ',' << p.timestep << ',' << labels[static_cast<std::size_t>(p.label)] << ','
        << (p.is_final ? 1 : 0);
    for (Eigen::Index k = 0; k < proj.cols(); ++k) csv << ',' << format_double(proj(r, k));
    csv << '\n';
    xs.push_back(proj(r, xcol));
    ys.push_back(proj(r, ycol));
    groups.push_back(p.label);
  }
  auto os = open_out(dir / (stem + ".svg"));
  svg::scatter(os, "Hidden states, PC" + std::to_string(xcol + 1) + " vs PC" + std::to_string(ycol + 1),
               "PC" + std::to_string(xcol + 1), "PC" + std::to_string(ycol + 1), xs, ys, groups, labels);
}

}  // namespace detail

/// Full analysis of one checkpoint; writes artifacts into `dir` and returns the report.
inline AnalysisResult analyze_run(const config::RunConfig& cfg, const PreparedData& d, const model::ModelParams& p,
                                  const fs::path& dir, bool with_fixed_points, const Log& log) {
  using statespace::CollectMode;
  if (p.config.vocab_size != static_cast<int>(d.vocab.size()) || p.config.n_classes != static_cast<int>(d.labels.size()))
    throw DataError("checkpoint does not match the prepared dataset (vocabulary or label count)");
  fs::create_directories(dir);
  AnalysisResult a;
  const auto& test = d.test.examples;
  const int n_labels = static_cast<int>(d.labels.size());

  // Dimensionality over all visited test states.
  const auto sample = statespace::collect_states(p, test, CollectMode::all);
  a.pca = statespace::fit_pca(sample);
  a.dims = statespace::intrinsic_dim(a.pca, cfg.analysis.threshold);
  detail::write_variance(dir, a.pca, a.dims);
  const Eigen::Index k3 = std::min<Eigen::Index>(3, a.pca.dim());
  const Matrix proj = statespace::project(a.pca, sample.states, k3);
  detail::write_projection(dir, "proj2d", proj.leftCols(std::min<Eigen::Index>(2, k3)), sample, d.labels, 0,
                           k3 > 1 ? 1 : 0);
  if (k3 == 3) detail::write_projection(dir, "proj3d", proj, sample, d.labels, 0, 2);
  if (cfg.analysis.export_states) {
    auto os = open_out(dir / "states.csv");
    write_matrix_csv(os, sample.states);
    auto prov = open_out(dir / "states_provenance.jsonl");
    statespace::write_provenance_jsonl(prov, sample, d.labels);
  }

  // Example trajectories: first test sentence of each intent.
  json examples = json::array();
  {
    auto csv = open_out(dir / "trajectories.csv");
    csv << "label,test_index,t,pc1,pc2\n";
    std::vector<svg::Series> series;
    std::vector<svg::Marker> markers;
    const Eigen::Index k2 = std::min<Eigen::Index>(2, a.pca.dim());
    for (int label = 0; label < n_labels; ++label) {
      auto it = std::find_if(test.begin(), test.end(), [&](const auto& ex) { return ex.label == label; });
      if (it == test.end()) continue;
      const auto idx = static_cast<std::size_t>(it - test.begin());
      const Matrix traj = statespace::project_trajectory(a.pca, model::forward(p, it->tokens.ids).trajectory, k2);
      svg::Series s{d.labels[static_cast<std::size_t>(label)], {}, {}, label, false};
      for (Eigen::Index t = 0; t < traj.rows(); ++t) {
        const double y = k2 > 1 ? traj(t, 1) : 0.0;
        csv << d.labels[static_cast<std::size_t>(label)] << ',' << idx << ',' << t << ',' << format_double(traj(t, 0))
            << ',' << format_double(y) << '\n';
        s.xs.push_back(traj(t, 0));
        s.ys.push_back(y);
      }
      markers.push_back({s.xs.back(), s.ys.back(), label, "circle"});
      if (series.empty()) markers.push_back({s.xs.front(), s.ys.front(), 7, "square"});
      series.push_back(std::move(s));
      examples.push_back({{"label", d.labels[static_cast<std::size_t>(label)]},
                          {"test_index", idx},
                          {"text", d.test_utterances[d.test.source_index[idx]].text}});
    }
    auto os = open_out(dir / "trajectories.svg");
    svg::lines(os, "Example trajectories from h0 (square)", "PC1", "PC2", series, d.labels, markers);
  }

  // Final-state clustering, full space and top-d projection.
  const auto finals = statespace::collect_states(p, test, CollectMode::final_only);
  std::vector<int> final_labels;
  for (const auto& pr : finals.provenance) final_labels.push_back(pr.label);
  clusterkit::KMeansConfig kc;
  kc.k = n_labels;
  kc.seed = cfg.analysis.kmeans_seed;
  kc.restarts = cfg.analysis.kmeans_restarts;
  kc.init = cfg.analysis.kmeans_init;
  kc.workers = cfg.workers;
  if (finals.states.rows() <= n_labels) throw DataError("too few test sentences to cluster");
  const auto dc = clusterkit::dim_consistency_check(finals.states, a.pca, a.dims.d, kc);
  a.silhouette_full = dc.score_full;
  a.silhouette_topd = dc.score_topd;
  a.purity = clusterkit::purity(dc.full.assignments, final_labels);
  const auto sil_full = clusterkit::silhouette_occupied(finals.states, dc.full.assignments);
  const Matrix finals_topd = statespace::project(a.pca, finals.states, a.dims.d);
  const auto sil_topd = clusterkit::silhouette_occupied(finals_topd, dc.topd.assignments);
  {
    auto csv = open_out(dir / "silhouette.csv");
    csv << "point,label,cluster_full,s_full,cluster_topd,s_topd\n";
    for (std::size_t i = 0; i < final_labels.size(); ++i) {
      csv << i << ',' << d.labels[static_cast<std::size_t>(final_labels[i])] << ',' << dc.full.assignments[i] << ','
          << format_double(sil_full.coefficients[i]) << ',' << dc.topd.assignments[i] << ','
          << format_double(sil_topd.coefficients[i]) << '\n';
    }
    // Silhouette profile: coefficients sorted within clusters, clusters in order.
    auto profile = [&](const std::vector<int>& assign, const std::vector<double>& coef, int group, bool dashed,
                       const std::string& name) {
      std::vector<std::pair<int, double>> rows;
      for (std::size_t i = 0; i < coef.size(); ++i) rows.push_back({assign[i], -coef[i]});
      std::sort(rows.begin(), rows.end());
      svg::Series s{name, {}, {}, group, dashed};
      for (std::size_t i = 0; i < rows.size(); ++i) {
        s.xs.push_back(static_cast<double>(i));
        s.ys.push_back(-rows[i].second);
      }
      return s;
    };
    const double n = static_cast<double>(final_labels.size());
    auto os = open_out(dir / "silhouette.svg");
    svg::lines(os,
               "Silhouette: full " + svg::num(a.silhouette_full) + ", top-" + std::to_string(a.dims.d) + " " +
                   svg::num(a.silhouette_topd),
               "points (grouped by cluster)", "silhouette",
               {profile(dc.full.assignments, sil_full.coefficients, 0, false, "full"),
                profile(dc.topd.assignments, sil_topd.coefficients, 1, false, "top-d"),
                {"mean full", {0.0, n}, {a.silhouette_full, a.silhouette_full}, 3, true},
                {"mean top-d", {0.0, n}, {a.silhouette_topd, a.silhouette_topd}, 3, true}},
               {"full", "top-d", "", "mean"});
  }

  // Readout alignment in full hidden space; distances to h0.
  a.alignment = clusterkit::match_readouts(p.readout, dc.full.centroids, true);
  a.centroid_distance_full = clusterkit::centroid_distance_stats(dc.full.centroids, Vector::Zero(p.config.hidden_dim));
  const Vector h0_topd = statespace::project(a.pca, Vector(Vector::Zero(a.pca.dim())), a.dims.d);
  a.centroid_distance_topd = clusterkit::centroid_distance_stats(dc.topd.centroids, h0_topd);
  {
    const Matrix c3 = statespace::project(a.pca, dc.full.centroids, k3);
    std::vector<double> norms;
    for (Eigen::Index i = 0; i < c3.rows(); ++i) norms.push_back(c3.row(i).norm());
    a.centroid_norm_top3 = mean_std(norms);
  }
  {
    auto csv = open_out(dir / "cosine.csv");
    csv << "readout";
    for (int j = 0; j < n_labels; ++j) csv << ",centroid" << j;
    csv << '\n';
    std::vector<std::string> rows, cols;
    for (int i = 0; i < n_labels; ++i) {
      csv << d.labels[static_cast<std::size_t>(i)];
      for (int j = 0; j < n_labels; ++j) csv << ',' << format_double(a.alignment.cosine(i, j));
      csv << '\n';
      rows.push_back(d.labels[static_cast<std::size_t>(i)]);
      cols.push_back("c" + std::to_string(i));
    }
    auto os = open_out(dir / "cosine.svg");
    svg::heatmap(os, "Readout / centroid cosine similarity", a.alignment.cosine, rows, cols, "readout row",
                 "final-state centroid");
  }

  a.test_accuracy = train::evaluate(p, test);
  json& r = a.report;
  r["model"] = {{"cell", model::to_string(p.config.cell)},
                {"embed_dim", p.config.embed_dim},
                {"hidden_dim", p.config.hidden_dim},
                {"vocab_size", p.config.vocab_size},
                {"n_classes", p.config.n_classes},
                {"seed", p.config.seed}};
  r["accuracy"] = {{"train", train::evaluate(p, d.train.examples)},
                   {"val", train::evaluate(p, d.val.examples)},
                   {"test", a.test_accuracy}};
  r["dimensionality"] = {{"d", a.dims.d},
                         {"threshold", a.dims.threshold},
                         {"degenerate", a.dims.degenerate},
                         {"states", sample.states.rows()},
                         {"cumulative", a.dims.cumulative}};
  r["clustering"] = {{"k", n_labels},
                     {"points", finals.states.rows()},
                     {"silhouette_full", a.silhouette_full},
                     {"silhouette_topd", a.silhouette_topd},
                     {"silhouette_defined", sil_full.defined && sil_topd.defined},
                     {"topd", a.dims.d},
                     {"purity", a.purity},
                     {"inertia", dc.full.inertia},
                     {"kmeans_seed", kc.seed},
                     {"kmeans_restarts", kc.restarts}};
  r["alignment"] = clusterkit::to_json(a.alignment);
  r["centroid_distance"] = {
      {"full", {{"mean", a.centroid_distance_full.mean}, {"std", a.centroid_distance_full.std}, {"origin", "h0"}}},
      {"topd", {{"mean", a.centroid_distance_topd.mean}, {"std", a.centroid_distance_topd.std}, {"origin", "projected h0"}}},
      {"top3_norm", {{"mean", a.centroid_norm_top3.mean}, {"std", a.centroid_norm_top3.std}, {"origin", "projected origin"}}}};
  r["example_sentences"] = examples;

  r["fixed_points"] = nullptr;
  r["radii"] = nullptr;
  if (with_fixed_points) {
    log("fixed points: " + std::to_string(cfg.fp.ic_count) + " initial states");
    a.census = fixedpoints::fp_census(p, test, cfg.fp);
    a.radii = fixedpoints::fp_radii(a.census->points, a.pca, 3);
    {
      auto csv = open_out(dir / "fp_census.csv");
      fixedpoints::write_census_csv(csv, *a.census);
      write_json(dir / "fp_census.json", fixedpoints::to_json(*a.census));
      auto rc = open_out(dir / "fp_radii.csv");
      fixedpoints::write_radii_csv(rc, a.radii);
    }
    {
      // Fixed points over the final states, top-2 plane.
      const Eigen::Index k2 = std::min<Eigen::Index>(2, a.pca.dim());
      const Matrix fin2 = statespace::project(a.pca, finals.states, k2);
      auto csv = open_out(dir / "fixed_points.csv");
      csv << "kind,label,index,marginal,pc1,pc2\n";
      std::vector<svg::Series> clouds;
      for (int label = 0; label < n_labels; ++label)
        clouds.push_back({d.labels[static_cast<std::size_t>(label)], {}, {}, label, false});
      for (Eigen::Index i = 0; i < fin2.rows(); ++i) {
        auto& s = clouds[static_cast<std::size_t>(final_labels[static_cast<std::size_t>(i)])];
        s.xs.push_back(fin2(i, 0));
        s.ys.push_back(k2 > 1 ? fin2(i, 1) : 0.0);
      }
      std::vector<double> xs, ys;
      std::vector<int> groups;
      for (const auto& s : clouds) {
        xs.insert(xs.end(), s.xs.begin(), s.xs.end());
        ys.insert(ys.end(), s.ys.begin(), s.ys.end());
        groups.insert(groups.end(), s.xs.size(), s.group);
        for (std::size_t i = 0; i < s.xs.size(); ++i)
          csv << "final_state," << s.name << ",,," << format_double(s.xs[i]) << ',' << format_double(s.ys[i]) << '\n';
      }
      std::vector<std::string> names = d.labels;
      names.insert(names.end(), {"stable", "1-index", "higher-index"});
      for (const auto& fp : a.census->points) {
        const Vector pp = statespace::project(a.pca, Vector(fp.state.head(a.pca.dim())), k2);
        const double y = k2 > 1 ? pp[1] : 0.0;
        csv << fixedpoints::to_string(fp.cls.kind) << ",," << fp.cls.index << ',' << (fp.cls.marginal ? 1 : 0) << ','
            << format_double(pp[0]) << ',' << format_double(y) << '\n';
        xs.push_back(pp[0]);
        ys.push_back(y);
        groups.push_back(n_labels + std::min(fp.cls.index, 2));
      }
      auto os = open_out(dir / "fixed_points.svg");
      svg::scatter(os, "Final states and fixed points (PC1 vs PC2)", "PC1", "PC2", xs, ys, groups, names);
    }
    r["fixed_points"] = {{"summary", fixedpoints::to_json(a.census->summary)},
                         {"points", a.census->points.size()},
                         {"ic_count", a.census->ic_count},
                         {"below_tolerance", a.census->below_tolerance},
                         {"all_verified", a.census->all_verified}};
    r["radii"] = fixedpoints::to_json(a.radii);
  }
  write_json(dir / "report.json", r);
  return a;
}

// ---------------------------------------------------------------------------
// Grid

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct CellAggregate {
  model::CellType cell = model::CellType::gru;
  int embed_dim = 0;
  int hidden_dim = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_accuracy;
  std::vector<double> val_accuracy;
  std::vector<double> val_loss;
  std::vector<int> dims;
  std::vector<double> silhouette;
  std::vector<double> alignment;
  std::uint64_t best_seed = 0;  // highest validation accuracy, lowest seed on ties
  json best_report;
};

/// Analyzes every trained run, then the fixed-point census on the selected seeds.
inline std::vector<CellAggregate> analyze_grid(const config::RunConfig& cfg, const PreparedData& d,
                                               const std::vector<TrainSummary>& runs, const Log& log) {
  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> by_cell;
  std::vector<std::tuple<int, int, int>> order;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto key = std::make_tuple(static_cast<int>(runs[i].spec.cell), runs[i].spec.embed_dim, runs[i].spec.hidden_dim);
    if (!by_cell.count(key)) order.push_back(key);
    by_cell[key].push_back(i);
  }
  std::vector<bool> wants_fp(runs.size(), cfg.analysis.fixed_points == config::FpScope::all);
  if (cfg.analysis.fixed_points == config::FpScope::best) {
    for (const auto& [key, idx] : by_cell) {
      std::size_t best = idx.front();
      for (auto i : idx)
        if (runs[i].val_accuracy > runs[best].val_accuracy) best = i;
      wants_fp[best] = true;
    }
  }
  // The census parallelises internally, so runs are analysed one after another.
  std::vector<json> reports(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto ckpt = model::load_checkpoint(runs[i].dir / "checkpoint.txt");
    auto a = analyze_run(cfg, d, ckpt.params, runs[i].dir, wants_fp[i], log);
    reports[i] = std::move(a.report);
    log(cell_name(runs[i].spec.cell, runs[i].spec.embed_dim, runs[i].spec.hidden_dim) + "/" +
        std::to_string(runs[i].spec.seed) + " analyzed: d " + std::to_string(reports[i]["dimensionality"]["d"].get<int>()));
  }

  std::vector<CellAggregate> out;
  for (const auto& key : order) {
    CellAggregate c;
    const auto& idx = by_cell[key];
    c.cell = runs[idx.front()].spec.cell;
    c.embed_dim = runs[idx.front()].spec.embed_dim;
    c.hidden_dim = runs[idx.front()].spec.hidden_dim;
    std::size_t best = idx.front();
    for (auto i : idx) {
      c.seeds.push_back(runs[i].spec.seed);
      c.test_accuracy.push_back(runs[i].test_accuracy);
      c.val_accuracy.push_back(runs[i].val_accuracy);
      c.val_loss.push_back(runs[i].val_loss);
      c.dims.push_back(reports[i]["dimensionality"]["d"].get<int>());
      c.silhouette.push_back(reports[i]["clustering"]["silhouette_full"].get<double>());
      c.alignment.push_back(reports[i]["alignment"]["alignment_mean"].get<double>());
      if (runs[i].val_accuracy > runs[best].val_accuracy) best = i;
    }
    c.best_seed = runs[best].spec.seed;
    c.best_report = reports[best];
    out.push_back(std::move(c));
  }
  return out;
}

inline json to_json(const CellAggregate& c) {
  std::vector<double> dims(c.dims.begin(), c.dims.end());
  json j;
  j["cell"] = model::to_string(c.cell);
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["seeds"] = c.seeds;
  j["test_accuracy_mean"] = mean_std(c.test_accuracy).mean;
  j["test_accuracy_std"] = mean_std(c.test_accuracy).std;
  j["dim_median"] = median(dims);
  j["silhouette_mean"] = mean_std(c.silhouette).mean;
  j["alignment_mean"] = mean_std(c.alignment).mean;
  j["per_seed"] = json::array();
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    j["per_seed"].push_back({{"seed", c.seeds[i]},
                             {"test_accuracy", c.test_accuracy[i]},
                             {"val_accuracy", c.val_accuracy[i]},
                             {"val_loss", c.val_loss[i]},
                             {"d", c.dims[i]},
                             {"silhouette", c.silhouette[i]},
                             {"alignment_mean", c.alignment[i]}});
  }
  j["best_seed"] = c.best_seed;
  j["best"] = {{"silhouette_full", c.best_report["clustering"]["silhouette_full"]},
               {"alignment", c.best_report["alignment"]},
               {"fixed_points", c.best_report["fixed_points"]},
               {"radii", c.best_report["radii"]}};
  return j;
}

/// grid.csv plus, per cell type, an accuracy heatmap and a median-d heatmap over (embed, hidden).
inline void write_grid_outputs(const fs::path& out, const config::GridSpec& g, const std::vector<CellAggregate>& cells) {
  json report;
  report["cells"] = json::array();
  for (const auto& c : cells) report["cells"].push_back(to_json(c));
  write_json(out / "grid_report.json", report);

  auto csv = open_out(out / "grid.csv");
  csv << "cell,embed_dim,hidden_dim,seeds,test_accuracy_mean,test_accuracy_std,dim_median,best_seed\n";
  for (const auto& c : cells) {
    const auto acc = mean_std(c.test_accuracy);
    csv << model::to_string(c.cell) << ',' << c.embed_dim << ',' << c.hidden_dim << ',' << c.seeds.size() << ','
        << format_double(acc.mean) << ',' << format_double(acc.std) << ','
        << format_double(median(std::vector<double>(c.dims.begin(), c.dims.end()))) << ',' << c.best_seed << '\n';
  }

  for (auto cell : g.cells) {
    Matrix acc = Matrix::Constant(static_cast<Eigen::Index>(g.embed_dims.size()),
                                  static_cast<Eigen::Index>(g.hidden_dims.size()), std::nan(""));
    Matrix dim = acc;
    for (const auto& c : cells) {
      if (c.cell != cell) continue;
      const auto i = std::find(g.embed_dims.begin(), g.embed_dims.end(), c.embed_dim) - g.embed_dims.begin();
      const auto j = std::find(g.hidden_dims.begin(), g.hidden_dims.end(), c.hidden_dim) - g.hidden_dims.begin();
      acc(i, j) = mean_std(c.test_accuracy).mean;
      dim(i, j) = median(std::vector<double>(c.dims.begin(), c.dims.end()));
    }
    std::vector<std::string> rows, cols;
    for (int e : g.embed_dims) rows.push_back("e=" + std::to_string(e));
    for (int h : g.hidden_dims) cols.push_back("h=" + std::to_string(h));
    const std::string name = model::to_string(cell);
    for (const auto& [what, m, title] : {std::tuple{"accuracy", &acc, "mean test accuracy"},
                                          std::tuple{"dim", &dim, "median intrinsic dimension"}}) {
      auto mcsv = open_out(out / ("heatmap_" + name + "_" + what + ".csv"));
      mcsv << "embed_dim";
      for (int h : g.hidden_dims) mcsv << ",h" << h;
      mcsv << '\n';
      for (Eigen::Index r = 0; r < m->rows(); ++r) {
        mcsv << g.embed_dims[static_cast<std::size_t>(r)];
        for (Eigen::Index k = 0; k < m->cols(); ++k) mcsv << ',' << format_double((*m)(r, k));
        mcsv << '\n';
      }
      auto os = open_out(out / ("heatmap_" + name + "_" + what + ".svg"));
      svg::heatmap(os, name + ": " + title, *m, rows, cols, "embed_dim", "hidden_dim");
    }
  }
}

/// Writes the normalized corpus plus the split, vocabulary and class census next to it.
inline json describe_prepared(const PreparedData& d) {
  json j;
  j["utterances"] = d.corpus.utterances.size();
  j["labels"] = d.labels;
  j["split"] = {{"train", d.split.train.size()}, {"val", d.split.val.size()}, {"test", d.split.test.size()}};
  j["vocab_size"] = d.vocab.size();
  j["dropped"] = {{"train", d.train.dropped}, {"val", d.val.dropped}, {"test", d.test.dropped}};
  j["warnings"] = d.corpus.warnings;
  return j;
}

}  // namespace rnndyn::pipeline
