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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rnndyn/fixedpoints.hpp"

using namespace rnndyn;
using namespace rnndyn::fixedpoints;

namespace {

// Positive root of h = tanh(2h).
const double kRoot = oracle::bisect([](double h) { return h - std::tanh(2.0 * h); }, 0.5, 1.5);

// Vanilla cell with W_rec = gain * I and nothing else: h' = tanh(gain * h) per coordinate.
model::ModelParams diagonal_vanilla(int n, double gain) {
  model::ModelConfig c;
  c.cell = model::CellType::vanilla;
  c.embed_dim = 1;
  c.hidden_dim = n;
  c.vocab_size = 4;
  c.n_classes = 2;
  auto p = model::ModelParams::zeros(c);
  p.w_rec = gain * Matrix::Identity(n, n);
  p.embedding.setRandom();
  p.w_in.setOnes();
  return p;
}

struct LinearMap {
  Matrix a;
  Eigen::Index dim() const { return a.rows(); }
  Vector apply(const Vector& h) const { return a * h; }
  Matrix jacobian(const Vector&) const { return a; }
};

static_assert(AutonomousMap<LinearMap>);
static_assert(AutonomousMap<ZeroInputDynamics>);

Matrix grid_ics(int n, int per_axis, double lo, double hi) {
  const int total = static_cast<int>(std::pow(per_axis, n));
  Matrix out(total, n);
  for (int i = 0; i < total; ++i) {
    int rest = i;
    for (int d = 0; d < n; ++d) {
      out(i, d) = lo + (hi - lo) * (rest % per_axis) / (per_axis - 1);
      rest /= per_axis;
    }
  }
  return out;
}

std::vector<corpus::Example> toy_data(int count, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(2, vocab - 1), len(2, 7);
  std::vector<corpus::Example> out(static_cast<std::size_t>(count));
  for (auto& ex : out) {
    const int t = len(rng);
    for (int i = 0; i < t; ++i) ex.tokens.ids.push_back(tok(rng));
  }
  return out;
}

}  // namespace

TEST(Speed, ZeroWeightsGiveHalfSquaredNorm) {
  auto p = diagonal_vanilla(3, 0.0);
  ZeroInputDynamics f(p);
  Vector h(3);
  h << 0.3, -1.0, 2.0;
  EXPECT_NEAR(speed(f, h), 0.5 * h.squaredNorm(), 1e-15);
  EXPECT_EQ(speed(f, Vector(Vector::Zero(3))), 0.0);
  h[1] = std::nan("");
  EXPECT_THROW(speed(f, h), NumericError);
}

TEST(Speed, ScalarTanhRootIsFixed) {
  EXPECT_NEAR(kRoot, 0.9575040240772688, 1e-12);
  auto p = diagonal_vanilla(1, 2.0);
  ZeroInputDynamics f(p);
  EXPECT_LT(speed(f, Vector::Constant(1, kRoot)), 1e-6);
  EXPECT_LT(speed(f, Vector::Constant(1, 0.9575)), 1e-6);
}

TEST(MinimizeSpeed, ExistingFixedPointReturnsImmediately) {
  auto p = diagonal_vanilla(1, 2.0);
  ZeroInputDynamics f(p);
  FpConfig cfg;
  const Vector ic = Vector::Constant(1, kRoot);
  auto c = minimize_speed(f, ic, cfg);
  EXPECT_LE(c.iterations, 1);
  EXPECT_EQ(c.q, speed(f, ic));
  EXPECT_TRUE(c.converged);
}

TEST(MinimizeSpeed, ZeroWeightsConvergeToOrigin) {
  auto p = diagonal_vanilla(4, 0.0);
  ZeroInputDynamics f(p);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    auto c = minimize_speed(f, oracle::random_matrix(4, 1, rng).col(0), FpConfig{});
    EXPECT_TRUE(c.converged);
    EXPECT_LT(c.state.norm(), 1e-4);
  }
}

TEST(MinimizeSpeed, ScalarTanhFromHalf) {
  auto p = diagonal_vanilla(1, 2.0);
  auto c = minimize_speed(ZeroInputDynamics(p), Vector::Constant(1, 0.5), FpConfig{});
  EXPECT_TRUE(c.converged);
  EXPECT_NEAR(c.state[0], kRoot, 1e-4);
  EXPECT_LT(c.q, 1e-10);
  EXPECT_THROW(minimize_speed(ZeroInputDynamics(p), Vector::Constant(1, INFINITY), FpConfig{}), NumericError);
}

TEST(MinimizeSpeed, LinearMapConvergesToOrigin) {
  Matrix a(2, 2);
  a << 0.5, 0.2, -0.1, 1.7;
  auto c = minimize_speed(LinearMap{a}, Vector::Constant(2, 3.0), FpConfig{});
  EXPECT_TRUE(c.converged);
  EXPECT_LT(c.state.norm(), 1e-4);
}

TEST(SampleIcs, CountDeterminismAndMembership) {
  for (auto cell : {model::CellType::gru, model::CellType::lstm}) {
    auto pr = gradcheck::make_problem(cell, 3, 4, 5, 2);
    auto data = toy_data(20, 12, 3);
    Matrix a = sample_ics(pr.params, data, 25000, 7);
    Matrix b = sample_ics(pr.params, data, 25000, 7);
    EXPECT_EQ(a.rows(), 25000);
    EXPECT_EQ(a.cols(), pr.params.config.state_dim());
    EXPECT_EQ(a, b);
    std::set<std::vector<double>> visited;
    for (const auto& ex : data) {
      auto traj = model::forward(pr.params, ex.tokens.ids).trajectory;
      for (Eigen::Index t = 1; t < traj.states.rows(); ++t) {
        std::vector<double> s(traj.states.row(t).begin(), traj.states.row(t).end());
        if (cell == model::CellType::lstm) s.insert(s.end(), traj.cells.row(t).begin(), traj.cells.row(t).end());
        visited.insert(s);
      }
    }
    for (Eigen::Index i = 0; i < 200; ++i) EXPECT_TRUE(visited.count({a.row(i).begin(), a.row(i).end()}));
  }
  auto pr = gradcheck::make_problem(model::CellType::gru, 3, 4, 5, 2);
  EXPECT_THROW(sample_ics(pr.params, std::vector<corpus::Example>{}, 10, 1), std::invalid_argument);
}

TEST(Dedup, RadiusExamples) {
  Vector a = Vector::Zero(3), b = Vector::Zero(3), c = Vector::Zero(3);
  b[0] = 1e-6;
  c[1] = 1.0;
  auto close = dedup({{a, 1e-9}, {b, 1e-10}}, 0.1);
  ASSERT_EQ(close.size(), 1u);
  EXPECT_EQ(close[0].n_converged_ics, 2u);
  EXPECT_EQ(close[0].q, 1e-10);  // lowest-q member represents
  EXPECT_EQ(dedup({{a, 1e-9}, {c, 1e-9}}, 0.1).size(), 2u);
}

TEST(Dedup, OrderIndependentForSeparatedPoints) {
  std::mt19937_64 rng(4);
  std::vector<Candidate> cands;
  for (int centre = 0; centre < 6; ++centre) {
    Vector base = Vector::Constant(2, centre * 0.5);  // pairwise >= 0.7 > 3 * radius
    for (int j = 0; j < 5; ++j) {
      cands.push_back({base + oracle::random_matrix(2, 1, rng, 0.005).col(0),
                       std::uniform_real_distribution<double>(0, 1e-8)(rng)});
    }
  }
  for (int s = 0; s < 10; ++s) {
    std::shuffle(cands.begin(), cands.end(), rng);
    auto reps = dedup(cands, 0.1);
    EXPECT_EQ(reps.size(), 6u);
    for (const auto& r : reps) EXPECT_EQ(r.n_converged_ics, 5u);
  }
}

TEST(Jacobians, ZeroWeightsAndLinearMap) {
  auto p = diagonal_vanilla(3, 0.0);
  p.w_in.setZero();
  Vector h = Vector::Constant(3, 0.4);
  EXPECT_TRUE(recurrent_jacobian(p, h).isZero());
  EXPECT_TRUE(input_jacobian(p, h).isZero());
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  auto fp = linearize(LinearMap{a}, Representative{Vector::Zero(2), 0.0, 1}, 1e-3);
  EXPECT_EQ(fp.j_rec, a);
}

TEST(Jacobians, VanillaFormula) {
  auto p = diagonal_vanilla(2, 0.0);
  p.w_rec << 0.5, -1.0, 0.3, 0.8;
  p.bias << 0.1, -0.2;
  Vector h(2);
  h << 0.2, -0.7;
  const Vector a = p.w_rec * h + p.bias;
  Matrix expected = (1.0 - a.array().tanh().square()).matrix().asDiagonal() * p.w_rec;
  EXPECT_LT((recurrent_jacobian(p, h) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Jacobians, FiniteDifferenceAtZeroInput) {
  for (auto cell : {model::CellType::vanilla, model::CellType::gru, model::CellType::lstm}) {
    auto pr = gradcheck::make_problem(cell, 3, 4, 3, 5);
    for (std::uint64_t s = 0; s < 3; ++s) {
      auto e = gradcheck::check_jacobians(pr.params, s, true);
      EXPECT_LT(e.recurrent, 1e-6) << model::to_string(cell);
      EXPECT_LT(e.input, 1e-6) << model::to_string(cell);
    }
    std::mt19937_64 rng(9);
    const Vector h = oracle::random_matrix(pr.params.config.state_dim(), 1, rng, 0.5).col(0);
    ZeroInputDynamics f(pr.params);
    auto fd = oracle::fd_jacobian([&](const Vector& v) { return f.apply(v); }, h);
    EXPECT_LT((recurrent_jacobian(pr.params, h) - fd).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Classify, Examples) {
  using C = std::complex<double>;
  ComplexVector a(3);
  a << C(0.5, 0), C(0.3, 0.2), C(0.3, -0.2);
  auto c = classify(a, 1e-3);
  EXPECT_EQ(c.kind, Kind::stable);
  EXPECT_EQ(c.index, 0);
  EXPECT_FALSE(c.marginal);

  ComplexVector b(2);
  b << 1.5, 0.5;
  c = classify(b, 1e-3);
  EXPECT_EQ(c.kind, Kind::saddle);
  EXPECT_EQ(c.index, 1);

  ComplexVector d(3);
  d << 1.5, 1.2, 0.5;
  c = classify(d, 1e-3);
  EXPECT_EQ(c.kind, Kind::saddle);
  EXPECT_EQ(c.index, 2);

  ComplexVector u(2);
  u << 2.0, -1.1;
  EXPECT_EQ(classify(u, 1e-3).kind, Kind::unstable);

  ComplexVector m(2);
  m << 0.9995, 0.2;
  c = classify(m, 1e-3);
  EXPECT_EQ(c.index, 0);
  EXPECT_TRUE(c.marginal);
  EXPECT_THROW(classify(ComplexVector(), 1e-3), std::invalid_argument);
}

TEST(Census, ZeroWeightModelHasOneStablePoint) {
  auto p = diagonal_vanilla(3, 0.0);
  FpConfig cfg;
  cfg.ic_count = 200;
  auto c = fp_census(p, toy_data(10, 4, 1), cfg);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].cls.kind, Kind::stable);
  EXPECT_LT(c.points[0].state.norm(), 1e-4);
  EXPECT_EQ(c.summary.stable, 1u);
  EXPECT_EQ(c.points[0].n_converged_ics, 200u);
}

TEST(Census, ProductOfScalarTanhCells) {
  // Two uncoupled h' = tanh(2h) cells: {0, +-r}^2 gives 4 attractors, 4 saddles, 1 repeller.
  auto p = diagonal_vanilla(2, 2.0);
  FpConfig cfg;
  auto c = census_from_ics(ZeroInputDynamics(p), grid_ics(2, 21, -1.5, 1.5), cfg);
  ASSERT_EQ(c.points.size(), 9u);
  EXPECT_EQ(c.summary.stable, 4u);
  EXPECT_EQ(c.summary.index1, 4u);
  EXPECT_EQ(c.summary.higher, 1u);
  EXPECT_TRUE(c.all_verified);
  for (const auto& fp : c.points) {
    for (Eigen::Index d = 0; d < 2; ++d) {
      const double x = std::abs(fp.state[d]);
      EXPECT_TRUE(x < 1e-6 || std::abs(x - kRoot) < 1e-6) << x;
    }
  }
}

TEST(Census, WorkersAndReruns) {
  auto pr = gradcheck::make_problem(model::CellType::gru, 3, 4, 5, 11);
  pr.params.w_rec *= 2.0;
  auto data = toy_data(30, 12, 5);
  FpConfig cfg;
  cfg.ic_count = 300;
  auto a = fp_census(pr.params, data, cfg);
  cfg.workers = 3;
  auto b = fp_census(pr.params, data, cfg);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].state, b.points[i].state);
    EXPECT_EQ(a.points[i].cls.index, b.points[i].cls.index);
  }
  EXPECT_TRUE(a.all_verified);
}

TEST(Census, LinearizationFidelityAndConjugatePairs) {
  for (std::uint64_t seed : {11, 12, 13}) {
    auto pr = gradcheck::make_problem(model::CellType::gru, 3, 4, 5, seed);
    pr.params.w_rec *= 2.5;
    FpConfig cfg;
    cfg.ic_count = 400;
    auto c = fp_census(pr.params, toy_data(30, 12, seed), cfg);
    ASSERT_FALSE(c.points.empty());
    ZeroInputDynamics f(pr.params);
    std::mt19937_64 rng(seed);
    for (const auto& fp : c.points) {
      EXPECT_LT(fp.verified_q, cfg.q_tolerance);
      // Complex eigenvalues of a real matrix come in conjugate pairs.
      for (const auto& l : fp.eigenvalues) {
        double best = INFINITY;
        for (const auto& m : fp.eigenvalues) best = std::min(best, std::abs(m - std::conj(l)));
        EXPECT_LT(best, 1e-9);
      }
      if (fp.cls.marginal) continue;
      if (fp.cls.kind == Kind::stable) {
        Vector v = oracle::random_matrix(static_cast<int>(fp.state.size()), 1, rng).col(0).normalized();
        Vector h = fp.state + 1e-3 * v;
        for (int t = 0; t < 50; ++t) h = f.apply(h);
        EXPECT_LT((h - fp.state).norm(), 1e-3);
      } else {
        Eigen::Index top = 0;
        fp.eigenvalues.cwiseAbs().maxCoeff(&top);
        if (std::abs(fp.eigenvalues[top].imag()) > 1e-12) continue;
        Vector v = fp.eigenvectors->col(top).real().normalized();
        Vector h = fp.state + 1e-6 * v;
        EXPECT_LT(speed(f, h), 1e-8);
        for (int t = 0; t < 10; ++t) h = f.apply(h);
        EXPECT_GT((h - fp.state).norm(), 1e-6);
      }
    }
  }
}

TEST(Radii, OriginAndSingleton) {
  Matrix sample(4, 3);
  sample << 1, 0, 0, -1, 0, 0, 0, 2, 0, 0, -2, 0;
  auto pca = statespace::fit_pca(sample);
  std::vector<FixedPoint> pts(3);
  for (auto& p : pts) p.state = Vector::Zero(3);
  pts[2].cls.index = 1;
  pts[2].state << 0, 3, 4;
  auto r = fp_radii(pts, pca);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].group, "stable");
  EXPECT_EQ(r[0].count, 2u);
  EXPECT_NEAR(r[0].from_origin.mean, 0.0, 1e-12);
  EXPECT_NEAR(r[0].from_origin.std, 0.0, 1e-12);
  EXPECT_EQ(r[1].group, "index1");
  EXPECT_NEAR(r[1].from_origin.mean, 5.0, 1e-12);
  EXPECT_EQ(r[1].from_origin.std, 0.0);
}

TEST(Serialization, CensusCsvAndJson) {
  auto p = diagonal_vanilla(1, 2.0);
  auto c = census_from_ics(ZeroInputDynamics(p), grid_ics(1, 11, -1.5, 1.5), FpConfig{});
  std::ostringstream os;
  write_census_csv(os, c);
  std::string header;
  std::istringstream is(os.str());
  std::getline(is, header);
  EXPECT_EQ(header, "id,kind,index,marginal,q,verified_q,spectral_radius,n_converged_ics");
  auto j = to_json(c);
  EXPECT_EQ(j["points"].size(), 3u);
  EXPECT_EQ(j["summary"]["stable"], 2);
}
