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

// KMeans, silhouette, centroid geometry and readout/centroid alignment.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rnndyn/numerics.hpp"
#include "rnndyn/statespace.hpp"

namespace rnndyn::clusterkit {

enum class KMeansInit { plus_plus, uniform };

struct KMeansConfig {
  int k = 7;
  KMeansInit init = KMeansInit::plus_plus;
  std::uint64_t seed = 0;
  int restarts = 10;
  int max_iterations = 300;
  int workers = 1;
};

struct ClusterResult {
  int k = 0;
  std::vector<int> assignments;
  Matrix centroids;  // k x dim
  double inertia = 0.0;
  std::uint64_t seed = 0;
  int restarts = 0;
  int best_restart = 0;
  int iterations = 0;      // Lloyd iterations of the winning restart
  bool converged = false;  // winning restart reached an assignment fixpoint
  std::vector<double> inertia_trace;  // winning restart, after each assignment step
};

namespace detail {

inline double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

inline void assign(const Matrix& pts, const Matrix& centroids, std::vector<int>& labels, std::vector<double>& d2) {
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = sq_dist(pts, i, centroids, c);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    d2[static_cast<std::size_t>(i)] = best;
  }
}

struct RestartResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

/// k distinct data points, uniformly.
inline Matrix init_uniform(const Matrix& pts, int k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(pts.rows());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Matrix out(k, pts.cols());
  for (int c = 0; c < k; ++c) {  // partial Fisher-Yates
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(c), n - 1);
    std::swap(idx[static_cast<std::size_t>(c)], idx[pick(rng)]);
    out.row(c) = pts.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]));
  }
  return out;
}

/// Data points drawn with probability proportional to squared distance from the chosen ones.
inline Matrix init_plus_plus(const Matrix& pts, int k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(pts.rows());
  Matrix out(k, pts.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  out.row(0) = pts.row(static_cast<Eigen::Index>(first(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts, static_cast<Eigen::Index>(i), out, 0);
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      chosen = std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng);
    } else {
      chosen = first(rng);  // all points coincide with chosen centroids
    }
    out.row(c) = pts.row(static_cast<Eigen::Index>(chosen));
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts, static_cast<Eigen::Index>(i), out, c));
  }
  return out;
}

inline RestartResult lloyd(const Matrix& pts, int k, KMeansInit init, std::uint64_t seed, int restart,
                           int max_iterations) {
  const auto n = static_cast<std::size_t>(pts.rows());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart)};
  std::mt19937_64 rng(seq);
  RestartResult r;
  r.centroids = init == KMeansInit::uniform ? init_uniform(pts, k, rng) : init_plus_plus(pts, k, rng);

  r.labels.assign(n, -1);
  std::vector<int> next(n);
  std::vector<double> d2(n);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    assign(pts, r.centroids, next, d2);
    r.trace.push_back(std::accumulate(d2.begin(), d2.end(), 0.0));
    if (next == r.labels) {
      r.converged = true;
      break;
    }
    r.labels = next;
    Matrix sums = Matrix::Zero(k, pts.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(r.labels[i]) += pts.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(r.labels[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      const auto far = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
      r.centroids.row(c) = pts.row(static_cast<Eigen::Index>(far));
      d2[far] = 0.0;
    }
  }
  assign(pts, r.centroids, r.labels, d2);
  r.inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
  return r;
}

}  // namespace detail

/// Lloyd's algorithm, best of `restarts` random initializations by inertia.
/// Initial centroids are data points, chosen by k-means++ or uniformly.
/// Ties between restarts go to the lowest restart index, so the result does not depend on `workers`.
inline ClusterResult kmeans(const Matrix& points, const KMeansConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("kmeans: k must be positive");
  if (points.rows() < cfg.k) throw std::invalid_argument("kmeans: fewer points than clusters");
  if (cfg.restarts < 1 || cfg.max_iterations < 1) throw std::invalid_argument("kmeans: bad iteration settings");

  std::vector<detail::RestartResult> runs(static_cast<std::size_t>(cfg.restarts));
  const int workers = std::clamp(cfg.workers, 1, cfg.restarts);
  if (workers == 1) {
    for (int r = 0; r < cfg.restarts; ++r) runs[static_cast<std::size_t>(r)] = detail::lloyd(points, cfg.k, cfg.init, cfg.seed, r, cfg.max_iterations);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int r = w; r < cfg.restarts; r += workers)
          runs[static_cast<std::size_t>(r)] = detail::lloyd(points, cfg.k, cfg.init, cfg.seed, r, cfg.max_iterations);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;

  ClusterResult out;
  out.k = cfg.k;
  out.assignments = std::move(runs[best].labels);
  out.centroids = std::move(runs[best].centroids);
  out.inertia = runs[best].inertia;
  out.seed = cfg.seed;
  out.restarts = cfg.restarts;
  out.best_restart = static_cast<int>(best);
  out.iterations = runs[best].iterations;
  out.converged = runs[best].converged;
  out.inertia_trace = std::move(runs[best].trace);
  return out;
}

struct SilhouetteReport {
  std::vector<double> coefficients;
  double score = 0.0;
  bool defined = true;  // false when fewer than two clusters are occupied
};

inline SilhouetteReport silhouette(const Matrix& points, const std::vector<int>& assignments) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (assignments.size() != n) throw std::invalid_argument("silhouette: assignment count mismatch");
  if (n == 0) throw std::invalid_argument("silhouette: no points");
  const int k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  if (*std::min_element(assignments.begin(), assignments.end()) < 0)
    throw std::invalid_argument("silhouette: negative cluster id");
  std::vector<std::size_t> size(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++size[static_cast<std::size_t>(a)];
  if (k < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");
  for (auto s : size)
    if (s == 0) throw std::invalid_argument("silhouette: empty cluster");

  SilhouetteReport rep;
  rep.coefficients.assign(n, 0.0);
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(assignments[i]);
    if (size[own] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[static_cast<std::size_t>(assignments[j])] +=
          (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = sums[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c)
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    const double m = std::max(a, b);
    rep.coefficients[i] = m > 0.0 ? (b - a) / m : 0.0;
  }
  rep.score = std::accumulate(rep.coefficients.begin(), rep.coefficients.end(), 0.0) / static_cast<double>(n);
  return rep;
}

struct DimConsistency {
  double score_full = 0.0;
  double score_topd = 0.0;
  int d = 0;
  ClusterResult full;
  ClusterResult topd;
};

/// Clusters the full points and their top-d projection with the same seed.
/// Silhouette of a clustering result that may leave clusters empty (data with
/// fewer distinct points than k). Cluster ids are compacted first; with fewer
/// than two occupied clusters every coefficient and the score are 0.
inline SilhouetteReport silhouette_occupied(const Matrix& points, const std::vector<int>& assignments) {
  std::map<int, int> compact;
  for (int a : assignments) compact.emplace(a, 0);
  int next = 0;
  for (auto& [id, c] : compact) c = next++;
  if (compact.size() < 2) {
    SilhouetteReport r;
    r.coefficients.assign(assignments.size(), 0.0);
    r.defined = false;
    return r;
  }
  std::vector<int> relabeled;
  relabeled.reserve(assignments.size());
  for (int a : assignments) relabeled.push_back(compact.at(a));
  return silhouette(points, relabeled);
}

inline DimConsistency dim_consistency_check(const Matrix& points_full, const statespace::PcaModel& pca, int d,
                                            const KMeansConfig& cfg) {
  if (d < 1 || d > pca.dim()) throw std::invalid_argument("dim_consistency_check: d out of range");
  DimConsistency out;
  out.d = d;
  out.full = kmeans(points_full, cfg);
  const Matrix projected = statespace::project(pca, points_full, d);
  out.topd = kmeans(projected, cfg);
  out.score_full = silhouette_occupied(points_full, out.full.assignments).score;
  out.score_topd = silhouette_occupied(projected, out.topd.assignments).score;
  return out;
}

inline MeanStd centroid_distance_stats(const Matrix& centroids, const Vector& origin) {
  if (centroids.rows() < 1) throw std::invalid_argument("centroid_distance_stats: no centroids");
  if (centroids.cols() != origin.size()) throw std::invalid_argument("centroid_distance_stats: dimension mismatch");
  std::vector<double> d;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) d.push_back((centroids.row(c).transpose() - origin).norm());
  return mean_std(d);
}

struct MatchedPair {
  int readout = 0;
  int centroid = 0;
  double cosine = 0.0;
};

struct AlignmentReport {
  Matrix cosine;  // readouts x centroids
  std::vector<MatchedPair> pairs;  // ordered by readout index
  double alignment_mean = 0.0;
  double min_matched = 0.0;
  double optimal_mean = 0.0;  // best mean over all bijections (k <= 8), else equal to alignment_mean
  bool optimal_checked = false;
  std::vector<std::string> warnings;
};

/// Greedy descending-cosine bijection between readout rows and centroids.
/// With `allow_zero`, a zero readout row or centroid scores cosine 0 against
/// everything (and is flagged in warnings) instead of throwing.
inline AlignmentReport match_readouts(const Matrix& readout, const Matrix& centroids, bool allow_zero = false) {
  if (readout.rows() != centroids.rows()) throw std::invalid_argument("match_readouts: readout/centroid count mismatch");
  if (readout.cols() != centroids.cols()) throw std::invalid_argument("match_readouts: dimension mismatch");
  const auto k = static_cast<int>(readout.rows());
  AlignmentReport rep;
  rep.cosine.resize(k, k);
  bool zero_seen = false;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (allow_zero && (readout.row(i).squaredNorm() == 0.0 || centroids.row(j).squaredNorm() == 0.0)) {
        rep.cosine(i, j) = 0.0;
        zero_seen = true;
        continue;
      }
      rep.cosine(i, j) = cosine_similarity(Vector(readout.row(i).transpose()), Vector(centroids.row(j).transpose()));
    }
  }
  if (zero_seen) rep.warnings.push_back("zero readout row or centroid; its cosines are set to 0");

  std::vector<bool> used_r(static_cast<std::size_t>(k), false), used_c(static_cast<std::size_t>(k), false);
  for (int step = 0; step < k; ++step) {
    int bi = -1, bj = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      if (used_r[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < k; ++j) {
        if (used_c[static_cast<std::size_t>(j)]) continue;
        if (rep.cosine(i, j) > best) {
          best = rep.cosine(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    used_r[static_cast<std::size_t>(bi)] = used_c[static_cast<std::size_t>(bj)] = true;
    rep.pairs.push_back({bi, bj, best});
  }
  std::sort(rep.pairs.begin(), rep.pairs.end(), [](const auto& a, const auto& b) { return a.readout < b.readout; });
  double sum = 0.0;
  rep.min_matched = 1.0;
  for (const auto& p : rep.pairs) {
    sum += p.cosine;
    rep.min_matched = std::min(rep.min_matched, p.cosine);
  }
  rep.alignment_mean = sum / k;
  rep.optimal_mean = rep.alignment_mean;

  if (k <= 8) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += rep.cosine(i, perm[static_cast<std::size_t>(i)]);
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    rep.optimal_mean = best / k;
    rep.optimal_checked = true;
    if (rep.optimal_mean - rep.alignment_mean > 1e-12)
      rep.warnings.push_back("greedy matching differs from the optimal assignment (optimal mean " +
                             format_double(rep.optimal_mean) + ")");
  }
  return rep;
}

/// Fraction of points whose label equals the majority label of their cluster.
inline double purity(const std::vector<int>& assignments, const std::vector<int>& labels) {
  if (assignments.size() != labels.size() || assignments.empty())
    throw std::invalid_argument("purity: size mismatch or empty");
  std::map<int, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[assignments[i]][labels[i]];
  std::size_t hits = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t m = 0;
    for (const auto& [label, c] : counts) m = std::max(m, c);
    hits += m;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline nlohmann::ordered_json to_json(const AlignmentReport& r) {
  nlohmann::ordered_json j;
  j["alignment_mean"] = r.alignment_mean;
  j["min_matched"] = r.min_matched;
  j["optimal_mean"] = r.optimal_mean;
  j["optimal_checked"] = r.optimal_checked;
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) j["pairs"].push_back({{"readout", p.readout}, {"centroid", p.centroid}, {"cosine", p.cosine}});
  j["warnings"] = r.warnings;
  return j;
}

inline nlohmann::ordered_json to_json(const SilhouetteReport& r) {
  nlohmann::ordered_json j;
  j["score"] = r.score;
  j["defined"] = r.defined;
  j["points"] = r.coefficients.size();
  return j;
}

}  // namespace rnndyn::clusterkit
