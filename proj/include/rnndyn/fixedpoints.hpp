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

// Fixed points of the autonomous map h -> F(h, 0), found by minimizing
// q(h) = 1/2 |h - F(h, 0)|^2 from many initial states, then linearized and classified.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rnndyn/common.hpp"
#include "rnndyn/corpus.hpp"
#include "rnndyn/model.hpp"
#include "rnndyn/numerics.hpp"
#include "rnndyn/statespace.hpp"

namespace rnndyn::fixedpoints {

template <class M>
concept AutonomousMap = requires(const M& m, const Vector& h) {
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.apply(h) } -> std::convertible_to<Vector>;
  { m.jacobian(h) } -> std::convertible_to<Matrix>;
};

/// The trained cell driven by the zero embedding vector. LSTM state is stacked (h, c).
class ZeroInputDynamics {
 public:
  explicit ZeroInputDynamics(const model::ModelParams& p) : p_(&p), x_(Vector::Zero(p.config.embed_dim)) {}

  Eigen::Index dim() const { return p_->config.state_dim(); }

  Vector apply(const Vector& state) const {
    auto k = model::cell_forward(*p_, model::unpack_state(p_->config, state), x_);
    return model::pack_state({k.h, k.c});
  }

  Matrix jacobian(const Vector& state) const {
    return model::state_jacobian(*p_, model::cell_forward(*p_, model::unpack_state(p_->config, state), x_));
  }

  Matrix input_jacobian(const Vector& state) const {
    return model::input_jacobian(*p_, model::cell_forward(*p_, model::unpack_state(p_->config, state), x_));
  }

  const model::ModelParams& params() const { return *p_; }

 private:
  const model::ModelParams* p_;
  Vector x_;
};

struct FpConfig {
  double q_tolerance = 1e-8;
  double dedup_radius = 0.1;
  int max_iterations = 5000;
  double learning_rate = 1e-2;
  double lr_decay = 1e-3;          // lr_t = lr / (1 + lr_decay * t)
  double newton_threshold = 1e-4;  // try Newton steps once q is below this
  int stall_window = 200;          // stop if q has not improved by 0.1% in this many iterations
  double margin = 1e-3;
  std::size_t ic_count = 25000;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const {
    if (!(q_tolerance > 0 && dedup_radius > 0 && learning_rate > 0 && lr_decay >= 0 && newton_threshold >= 0 &&
          margin > 0 && max_iterations > 0 && stall_window > 0 && ic_count > 0 && workers > 0))
      throw ConfigError("fixed_points: all settings must be positive");
  }

  double stop_q() const { return q_tolerance * 1e-2; }
};

template <AutonomousMap M>
double speed(const M& f, const Vector& h) {
  if (!h.allFinite()) throw NumericError("speed: non-finite state");
  return 0.5 * (h - f.apply(h)).squaredNorm();
}

struct Candidate {
  Vector state;
  double q = 0.0;
  int iterations = 0;
  bool converged = false;  // q reached the stopping threshold
  bool finite = true;      // false: optimization produced a non-finite value and was abandoned
};

/// Adam descent on q using the analytic gradient (I - J)^T (h - F(h)),
/// with Newton steps on h - F(h) = 0 once q is small.
template <AutonomousMap M>
Candidate minimize_speed(const M& f, const Vector& ic, const FpConfig& cfg) {
  if (!ic.allFinite()) throw NumericError("minimize_speed: non-finite initial state");
  const Eigen::Index n = f.dim();
  const double stop = cfg.stop_q();
  Vector h = ic;
  Vector r = h - f.apply(h);
  double q = 0.5 * r.squaredNorm();
  if (q < stop) return {h, q, 0, true, true};

  Vector m = Vector::Zero(n), v = Vector::Zero(n);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double best = q;
  int since_best = 0;
  int it = 0;
  while (it < cfg.max_iterations) {
    ++it;
    const Matrix a = Matrix::Identity(n, n) - f.jacobian(h);
    bool stepped = false;
    if (q < cfg.newton_threshold) {
      const Vector delta = a.colPivHouseholderQr().solve(-r);
      if (delta.allFinite()) {
        const Vector h_try = h + delta;
        const Vector r_try = h_try - f.apply(h_try);
        const double q_try = 0.5 * r_try.squaredNorm();
        if (std::isfinite(q_try) && q_try < q) {
          h = h_try;
          r = r_try;
          q = q_try;
          stepped = true;
        }
      }
    }
    if (!stepped) {
      const Vector g = a.transpose() * r;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g.cwiseProduct(g);
      const double lr = cfg.learning_rate / (1.0 + cfg.lr_decay * it);
      const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
      h -= lr * ((m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
      r = h - f.apply(h);
      q = 0.5 * r.squaredNorm();
    }
    if (!std::isfinite(q) || !h.allFinite()) return {h, q, it, false, false};
    if (q < stop) return {h, q, it, true, true};
    if (q < best * 0.999) {
      best = q;
      since_best = 0;
    } else if (++since_best >= cfg.stall_window) {
      break;
    }
  }
  return {h, q, it, false, true};
}

/// Uniform draws, with replacement, from the visited states h_1..h_T of `data`.
inline Matrix sample_ics(const model::ModelParams& p, std::span<const corpus::Example> data, std::size_t count,
                         std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("sample_ics: empty data");
  const Eigen::Index n = p.config.hidden_dim;
  const bool lstm = p.config.cell == model::CellType::lstm;
  std::vector<Vector> visited;
  for (const auto& ex : data) {
    auto traj = model::forward(p, ex.tokens.ids).trajectory;
    for (Eigen::Index t = 1; t < traj.states.rows(); ++t) {
      Vector s(p.config.state_dim());
      s.head(n) = traj.states.row(t).transpose();
      if (lstm) s.tail(n) = traj.cells.row(t).transpose();
      visited.push_back(std::move(s));
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, visited.size() - 1);
  Matrix out(static_cast<Eigen::Index>(count), p.config.state_dim());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = visited[pick(rng)].transpose();
  return out;
}

struct Representative {
  Vector state;
  double q = 0.0;
  std::size_t n_converged_ics = 0;
};

/// Greedy merge by ascending q (then lexicographic state): a candidate within `radius`
/// of an existing representative joins it, otherwise it starts a new one.
inline std::vector<Representative> dedup(std::vector<Candidate> candidates, double radius) {
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.q != b.q) return a.q < b.q;
    return std::lexicographical_compare(a.state.begin(), a.state.end(), b.state.begin(), b.state.end());
  });
  std::vector<Representative> reps;
  for (auto& c : candidates) {
    bool merged = false;
    for (auto& r : reps) {
      if ((r.state - c.state).norm() <= radius) {
        ++r.n_converged_ics;
        merged = true;
        break;
      }
    }
    if (!merged) reps.push_back({std::move(c.state), c.q, 1});
  }
  return reps;
}

enum class Kind { stable, saddle, unstable };

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::stable: return "stable";
    case Kind::saddle: return "saddle";
    case Kind::unstable: return "unstable";
  }
  return "?";
}

struct Classification {
  Kind kind = Kind::stable;
  int index = 0;          // eigenvalues with |lambda| > 1 + margin
  bool marginal = false;  // some | |lambda| - 1 | <= margin
};

inline Classification classify(const ComplexVector& eigenvalues, double margin) {
  if (eigenvalues.size() == 0) throw std::invalid_argument("classify: no eigenvalues");
  Classification c;
  for (const auto& l : eigenvalues) {
    const double a = std::abs(l);
    if (a > 1.0 + margin) ++c.index;
    if (std::abs(a - 1.0) <= margin) c.marginal = true;
  }
  if (c.index == 0) {
    c.kind = Kind::stable;
  } else if (c.index == eigenvalues.size()) {
    c.kind = Kind::unstable;
  } else {
    c.kind = Kind::saddle;
  }
  return c;
}

struct FixedPoint {
  Vector state;
  double q = 0.0;
  double verified_q = 0.0;  // recomputed after dedup
  Matrix j_rec;
  Matrix j_inp;
  ComplexVector eigenvalues;
  std::optional<ComplexMatrix> eigenvectors;
  Classification cls;
  std::size_t n_converged_ics = 0;
};

inline Matrix recurrent_jacobian(const model::ModelParams& p, const Vector& state) {
  if (!state.allFinite()) throw NumericError("recurrent_jacobian: non-finite state");
  return ZeroInputDynamics(p).jacobian(state);
}

inline Matrix input_jacobian(const model::ModelParams& p, const Vector& state) {
  if (!state.allFinite()) throw NumericError("input_jacobian: non-finite state");
  return ZeroInputDynamics(p).input_jacobian(state);
}

/// Linearizes a point of any autonomous map and classifies it.
template <AutonomousMap M>
FixedPoint linearize(const M& f, const Representative& rep, double margin) {
  FixedPoint fp;
  fp.state = rep.state;
  fp.q = rep.q;
  fp.verified_q = speed(f, rep.state);
  fp.n_converged_ics = rep.n_converged_ics;
  fp.j_rec = f.jacobian(rep.state);
  auto e = eig_general(fp.j_rec, true);
  fp.eigenvalues = e.eigenvalues;
  fp.eigenvectors = e.eigenvectors;
  fp.cls = classify(fp.eigenvalues, margin);
  return fp;
}

struct CensusSummary {
  std::size_t stable = 0;
  std::size_t index1 = 0;
  std::size_t higher = 0;    // index >= 2, including fully unstable points
  std::size_t marginal = 0;  // excluded from the three columns above
  std::map<int, std::size_t> by_index;
};

struct Census {
  std::vector<FixedPoint> points;  // ordered by ascending q
  CensusSummary summary;
  std::size_t ic_count = 0;
  std::size_t below_tolerance = 0;
  std::size_t nonfinite = 0;
  bool all_verified = true;  // every point re-verified q < tolerance
};

inline CensusSummary summarize(const std::vector<FixedPoint>& points) {
  CensusSummary s;
  for (const auto& p : points) {
    if (p.cls.marginal) {
      ++s.marginal;
      continue;
    }
    ++s.by_index[p.cls.index];
    if (p.cls.index == 0) {
      ++s.stable;
    } else if (p.cls.index == 1) {
      ++s.index1;
    } else {
      ++s.higher;
    }
  }
  return s;
}

/// minimize_speed over every row of `ics` (in parallel when workers > 1), then
/// filter, merge and classify. The result does not depend on the worker count.
template <AutonomousMap M>
Census census_from_ics(const M& f, const Matrix& ics, const FpConfig& cfg) {
  cfg.validate();
  const auto count = static_cast<std::size_t>(ics.rows());
  std::vector<Candidate> results(count);
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < count; i += stride)
      results[i] = minimize_speed(f, Vector(ics.row(static_cast<Eigen::Index>(i)).transpose()), cfg);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, cfg.workers));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
    for (auto& t : pool) t.join();
  }

  Census c;
  c.ic_count = count;
  std::vector<Candidate> kept;
  for (auto& r : results) {
    if (!r.finite) {
      ++c.nonfinite;
      continue;
    }
    if (r.q < cfg.q_tolerance) kept.push_back(std::move(r));
  }
  c.below_tolerance = kept.size();
  for (const auto& rep : dedup(std::move(kept), cfg.dedup_radius)) {
    c.points.push_back(linearize(f, rep, cfg.margin));
    if (!(c.points.back().verified_q < cfg.q_tolerance)) c.all_verified = false;
  }
  c.summary = summarize(c.points);
  return c;
}

inline Census fp_census(const model::ModelParams& p, std::span<const corpus::Example> data, const FpConfig& cfg) {
  cfg.validate();
  const ZeroInputDynamics f(p);
  Census c = census_from_ics(f, sample_ics(p, data, cfg.ic_count, cfg.seed), cfg);
  for (auto& fp : c.points) fp.j_inp = f.input_jacobian(fp.state);
  return c;
}

struct RadiusGroup {
  std::string group;  // "stable", "index1", "index2", ...
  std::size_t count = 0;
  MeanStd from_origin;  // norm of the top-k projection
  MeanStd from_h0;      // distance to the projection of h_0 = 0
};

inline std::string group_name(const Classification& c) {
  return c.index == 0 ? "stable" : "index" + std::to_string(c.index);
}

/// Per-group radii of the hidden part of each non-marginal point in the top-k projection.
inline std::vector<RadiusGroup> fp_radii(const std::vector<FixedPoint>& points, const statespace::PcaModel& pca,
                                         Eigen::Index k = 3) {
  k = std::min(k, pca.dim());
  const Vector origin = statespace::project(pca, Vector(Vector::Zero(pca.dim())), k);
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& p : points) {
    if (p.cls.marginal) continue;
    if (p.state.size() < pca.dim()) throw std::invalid_argument("fp_radii: state smaller than PCA dimension");
    const Vector proj = statespace::project(pca, Vector(p.state.head(pca.dim())), k);
    groups[p.cls.index].first.push_back(proj.norm());
    groups[p.cls.index].second.push_back((proj - origin).norm());
  }
  std::vector<RadiusGroup> out;
  for (const auto& [index, d] : groups) {
    Classification c;
    c.index = index;
    out.push_back({group_name(c), d.first.size(), mean_std(d.first), mean_std(d.second)});
  }
  return out;
}

inline nlohmann::ordered_json to_json(const FixedPoint& fp) {
  nlohmann::ordered_json j;
  j["q"] = fp.q;
  j["verified_q"] = fp.verified_q;
  j["kind"] = to_string(fp.cls.kind);
  j["index"] = fp.cls.index;
  j["marginal"] = fp.cls.marginal;
  j["n_converged_ics"] = fp.n_converged_ics;
  j["state"] = std::vector<double>(fp.state.begin(), fp.state.end());
  auto ev = nlohmann::ordered_json::array();
  for (const auto& l : fp.eigenvalues) ev.push_back({l.real(), l.imag()});
  j["eigenvalues"] = ev;
  return j;
}

inline nlohmann::ordered_json to_json(const CensusSummary& s) {
  nlohmann::ordered_json j;
  j["stable"] = s.stable;
  j["index1"] = s.index1;
  j["higher"] = s.higher;
  j["marginal"] = s.marginal;
  auto by = nlohmann::ordered_json::array();
  for (const auto& [i, n] : s.by_index) by.push_back({{"index", i}, {"count", n}});
  j["by_index"] = by;
  return j;
}

inline nlohmann::ordered_json to_json(const Census& c) {
  nlohmann::ordered_json j;
  j["ic_count"] = c.ic_count;
  j["below_tolerance"] = c.below_tolerance;
  j["nonfinite"] = c.nonfinite;
  j["all_verified"] = c.all_verified;
  j["summary"] = to_json(c.summary);
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : c.points) j["points"].push_back(to_json(p));
  return j;
}

inline nlohmann::ordered_json to_json(const std::vector<RadiusGroup>& radii) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& g : radii) {
    j.push_back({{"group", g.group},
                 {"count", g.count},
                 {"mean", g.from_origin.mean},
                 {"std", g.from_origin.std},
                 {"mean_from_h0", g.from_h0.mean},
                 {"std_from_h0", g.from_h0.std}});
  }
  return j;
}

/// One row per fixed point: index, kind, saddle index, marginal flag, q, |lambda|_max.
inline void write_census_csv(std::ostream& os, const Census& c) {
  os << "id,kind,index,marginal,q,verified_q,spectral_radius,n_converged_ics\n";
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    os << i << ',' << to_string(p.cls.kind) << ',' << p.cls.index << ',' << (p.cls.marginal ? 1 : 0) << ','
       << format_double(p.q) << ',' << format_double(p.verified_q) << ','
       << format_double(p.eigenvalues.cwiseAbs().maxCoeff()) << ',' << p.n_converged_ics << '\n';
  }
}

inline void write_radii_csv(std::ostream& os, const std::vector<RadiusGroup>& radii) {
  os << "group,count,mean,std,mean_from_h0,std_from_h0\n";
  for (const auto& g : radii) {
    os << g.group << ',' << g.count << ',' << format_double(g.from_origin.mean) << ',' << format_double(g.from_origin.std)
       << ',' << format_double(g.from_h0.mean) << ',' << format_double(g.from_h0.std) << '\n';
  }
}

}  // namespace rnndyn::fixedpoints
