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

// Hidden-state sampling, PCA, explained-variance dimensionality and projections.
// Projections are centered: p = (h - mean) * U[:, :k].

#pragma once

#include <nlohmann/json.hpp>

#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "rnndyn/corpus.hpp"
#include "rnndyn/model.hpp"
#include "rnndyn/numerics.hpp"

namespace rnndyn::statespace {

enum class CollectMode { all, final_only };

struct RowProvenance {
  std::size_t sentence = 0;  // index into the input data
  std::size_t timestep = 0;  // t in 1..T
  int label = 0;
  bool is_final = false;
};

struct StateSpaceSample {
  Matrix states;  // one visited hidden state per row
  std::vector<RowProvenance> provenance;
};

/// Runs every sentence and stacks h_1..h_T (or h_T only). h_0 is never included.
inline StateSpaceSample collect_states(const model::ModelParams& p, std::span<const corpus::Example> data,
                                       CollectMode mode) {
  if (data.empty()) throw std::invalid_argument("collect_states: empty data");
  std::vector<model::HiddenTrajectory> trajectories;
  trajectories.reserve(data.size());
  Eigen::Index rows = 0;
  for (const auto& ex : data) {
    trajectories.push_back(model::forward(p, ex.tokens.ids).trajectory);
    rows += mode == CollectMode::all ? static_cast<Eigen::Index>(ex.tokens.length()) : 1;
  }
  StateSpaceSample out;
  out.states.resize(rows, p.config.hidden_dim);
  out.provenance.reserve(static_cast<std::size_t>(rows));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& traj = trajectories[i];
    const std::size_t t_len = traj.length();
    const std::size_t first = mode == CollectMode::all ? 1 : t_len;
    for (std::size_t t = first; t <= t_len; ++t) {
      out.states.row(r++) = traj.states.row(static_cast<Eigen::Index>(t));
      out.provenance.push_back({i, t, data[i].label, t == t_len});
    }
  }
  return out;
}

struct PcaModel {
  Vector mean;                      // n
  Matrix components;                // n x n, column k = k-th principal axis
  Vector explained_variance_ratio;  // n, non-increasing, sums to 1
  Vector singular_values;           // of the centered sample, padded with zeros
  double total_variance = 0.0;      // sum of squared deviations / (rows - 1)
  bool degenerate = false;          // sample has zero variance

  Eigen::Index dim() const { return mean.size(); }
};

/// PCA from the SVD of the column-centered sample.
inline PcaModel fit_pca(const Matrix& sample) {
  if (sample.rows() < 2) throw std::invalid_argument("fit_pca: need at least 2 rows");
  const Eigen::Index n = sample.cols();
  PcaModel pca;
  pca.mean = sample.colwise().mean().transpose();
  Matrix centered = sample.rowwise() - pca.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> solver(centered, Eigen::ComputeFullV);
  const Vector s = solver.singularValues();
  pca.components = solver.matrixV();
  pca.singular_values = Vector::Zero(n);
  pca.singular_values.head(s.size()) = s;

  const double ss = pca.singular_values.squaredNorm();
  pca.total_variance = ss / static_cast<double>(sample.rows() - 1);
  pca.explained_variance_ratio = Vector::Zero(n);
  if (ss > 0.0) {
    pca.explained_variance_ratio = pca.singular_values.array().square() / ss;
  } else {
    pca.degenerate = true;
    pca.explained_variance_ratio[0] = 1.0;
    pca.components = Matrix::Identity(n, n);
  }
  return pca;
}

inline PcaModel fit_pca(const StateSpaceSample& sample) { return fit_pca(sample.states); }

struct DimReport {
  int d = 1;
  double threshold = 0.95;
  std::vector<double> cumulative;  // cumulative explained-variance ratio, per component count
  bool degenerate = false;
};

/// Smallest k whose cumulative explained-variance ratio reaches `threshold`.
inline DimReport intrinsic_dim(const PcaModel& pca, double threshold = 0.95) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("intrinsic_dim: threshold outside (0,1]");
  DimReport out;
  out.threshold = threshold;
  out.degenerate = pca.degenerate;
  double cum = 0.0;
  out.d = static_cast<int>(pca.dim());
  bool found = false;
  for (Eigen::Index k = 0; k < pca.dim(); ++k) {
    cum += pca.explained_variance_ratio[k];
    out.cumulative.push_back(cum);
    if (!found && cum >= threshold - 1e-12) {
      out.d = static_cast<int>(k + 1);
      found = true;
    }
  }
  return out;
}

/// Projects each row of `states` onto the top-k principal axes.
inline Matrix project(const PcaModel& pca, const Matrix& states, Eigen::Index k) {
  if (k < 1 || k > pca.dim()) throw std::invalid_argument("project: k out of range");
  if (states.cols() != pca.dim()) throw std::invalid_argument("project: dimension mismatch");
  return (states.rowwise() - pca.mean.transpose()) * pca.components.leftCols(k);
}

inline Vector project(const PcaModel& pca, const Vector& state, Eigen::Index k) {
  Matrix row = state.transpose();
  return project(pca, row, k).row(0).transpose();
}

/// Projects h_0..h_T, preserving order.
inline Matrix project_trajectory(const PcaModel& pca, const model::HiddenTrajectory& traj, Eigen::Index k) {
  return project(pca, traj.states, k);
}

/// Row provenance as JSON-lines: {"row", "sentence", "timestep", "label", "final"}.
inline void write_provenance_jsonl(std::ostream& os, const StateSpaceSample& sample,
                                   const std::vector<std::string>& labels) {
  for (std::size_t r = 0; r < sample.provenance.size(); ++r) {
    const auto& p = sample.provenance[r];
    nlohmann::ordered_json j;
    j["row"] = r;
    j["sentence"] = p.sentence;
    j["timestep"] = p.timestep;
    j["label"] = labels.empty() ? std::to_string(p.label) : labels.at(static_cast<std::size_t>(p.label));
    j["final"] = p.is_final;
    os << j.dump() << '\n';
  }
}

}  // namespace rnndyn::statespace
