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

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rnndyn/statespace.hpp"

using namespace rnndyn;
using namespace rnndyn::statespace;

namespace {

model::ModelParams small_model(std::uint64_t seed = 3) {
  model::ModelConfig c;
  c.cell = model::CellType::gru;
  c.embed_dim = 3;
  c.hidden_dim = 5;
  c.vocab_size = 10;
  c.n_classes = 3;
  c.seed = seed;
  return model::init_params(c);
}

std::vector<corpus::Example> sentences(std::initializer_list<int> lengths) {
  std::vector<corpus::Example> out;
  int label = 0;
  for (int len : lengths) {
    corpus::Example ex;
    for (int t = 0; t < len; ++t) ex.tokens.ids.push_back(2 + (t * 3 + label) % 8);
    ex.label = label++ % 3;
    out.push_back(ex);
  }
  return out;
}

Matrix planar_sample(int rows, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix basis = oracle::random_matrix(2, dim, rng);
  const Matrix coeffs = oracle::random_matrix(rows, 2, rng, 3.0);
  Matrix out = coeffs * basis;
  out.rowwise() += oracle::random_matrix(1, dim, rng).row(0);
  return out;
}

}  // namespace

TEST(CollectStates, RowCountsAndProvenance) {
  auto p = small_model();
  auto data = sentences({4, 5, 6});
  auto all = collect_states(p, data, CollectMode::all);
  EXPECT_EQ(all.states.rows(), 15);
  ASSERT_EQ(all.provenance.size(), 15u);
  auto fin = collect_states(p, data, CollectMode::final_only);
  EXPECT_EQ(fin.states.rows(), 3);
  for (const auto& r : fin.provenance) EXPECT_TRUE(r.is_final);

  for (std::size_t row = 0; row < all.provenance.size(); ++row) {
    const auto& pr = all.provenance[row];
    auto traj = model::forward(p, data[pr.sentence].tokens.ids).trajectory;
    EXPECT_EQ(all.states.row(static_cast<Eigen::Index>(row)), traj.states.row(static_cast<Eigen::Index>(pr.timestep)));
    EXPECT_GE(pr.timestep, 1u);
    EXPECT_EQ(pr.label, data[pr.sentence].label);
  }
  EXPECT_THROW(collect_states(p, std::vector<corpus::Example>{}, CollectMode::all), std::invalid_argument);
}

TEST(FitPca, PlanarDataHasTwoComponents) {
  auto pca = fit_pca(planar_sample(40, 10, 1));
  for (Eigen::Index k = 2; k < 10; ++k) EXPECT_LT(pca.explained_variance_ratio[k], 1e-12);
  EXPECT_EQ(intrinsic_dim(pca).d, 2);
  EXPECT_THROW(fit_pca(Matrix(Matrix::Zero(1, 3))), std::invalid_argument);
}

TEST(FitPca, IsotropicCloud) {
  std::mt19937_64 rng(11);
  auto pca = fit_pca(oracle::random_matrix(10000, 5, rng));
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_NEAR(pca.explained_variance_ratio[k], 0.2, 0.02);
}

TEST(FitPca, MatchesCovarianceEigenOracle) {
  std::mt19937_64 rng(5);
  Matrix x = oracle::random_matrix(50, 6, rng);
  x.col(1) += 2.0 * x.col(0);
  x.col(4) *= 3.0;
  auto pca = fit_pca(x);
  auto ref = oracle::jacobi_eigen(oracle::covariance(x));
  double total = 0.0;
  for (double v : ref.values) total += v;
  for (int k = 0; k < 6; ++k) {
    const double oracle_ratio = ref.values[static_cast<std::size_t>(5 - k)] / total;
    EXPECT_NEAR(pca.explained_variance_ratio[k], oracle_ratio, 1e-8);
    // Axes agree up to sign.
    const auto& v = ref.vectors[static_cast<std::size_t>(5 - k)];
    double dot = 0.0;
    for (int i = 0; i < 6; ++i) dot += v[static_cast<std::size_t>(i)] * pca.components(i, k);
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
  }
  EXPECT_NEAR(pca.total_variance, total, 1e-8);
}

TEST(FitPca, Invariants) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    auto pca = fit_pca(oracle::random_matrix(30, 7, rng));
    EXPECT_LT((pca.components.transpose() * pca.components - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(pca.explained_variance_ratio.sum(), 1.0, 1e-12);
    for (Eigen::Index k = 0; k < 7; ++k) {
      EXPECT_GE(pca.explained_variance_ratio[k], 0.0);
      if (k > 0) {
        EXPECT_LE(pca.explained_variance_ratio[k], pca.explained_variance_ratio[k - 1]);
      }
    }
  }
}

TEST(FitPca, ZeroVarianceIsDegenerate) {
  auto pca = fit_pca(Matrix(Matrix::Zero(10, 4)));
  EXPECT_TRUE(pca.degenerate);
  auto d = intrinsic_dim(pca);
  EXPECT_EQ(d.d, 1);
  EXPECT_TRUE(d.degenerate);
}

TEST(IntrinsicDim, ThresholdBehaviour) {
  std::mt19937_64 rng(2);
  auto pca = fit_pca(oracle::random_matrix(100, 6, rng));
  EXPECT_EQ(intrinsic_dim(pca, 1.0).d, 6);
  EXPECT_THROW(intrinsic_dim(pca, 0.0), std::invalid_argument);
  EXPECT_THROW(intrinsic_dim(pca, 1.2), std::invalid_argument);
  int prev = 1;
  for (double th = 0.05; th <= 1.0; th += 0.05) {
    auto r = intrinsic_dim(pca, th);
    EXPECT_GE(r.d, prev);
    EXPECT_GE(r.cumulative[static_cast<std::size_t>(r.d - 1)], th - 1e-12);
    if (r.d > 1) {
      EXPECT_LT(r.cumulative[static_cast<std::size_t>(r.d - 2)], th);
    }
    prev = r.d;
  }
}

TEST(Project, CenteringAndIsometry) {
  std::mt19937_64 rng(4);
  Matrix x = oracle::random_matrix(40, 5, rng);
  auto pca = fit_pca(x);
  EXPECT_LT(project(pca, pca.mean, 3).norm(), 1e-12);
  for (Eigen::Index i = 0; i < 5; ++i) {
    Vector h = x.row(i).transpose();
    EXPECT_NEAR(project(pca, h, 5).norm(), (h - pca.mean).norm(), 1e-10);
  }
  EXPECT_THROW(project(pca, x, 0), std::invalid_argument);
  EXPECT_THROW(project(pca, x, 6), std::invalid_argument);
}

TEST(Project, VarianceIdentityAndResidual) {
  std::mt19937_64 rng(6);
  Matrix x = oracle::random_matrix(60, 6, rng);
  x.col(2) += x.col(0);
  auto pca = fit_pca(x);
  for (Eigen::Index k = 1; k <= 6; ++k) {
    Matrix p = project(pca, x, k);
    const double var = p.squaredNorm() / static_cast<double>(x.rows() - 1);
    const double head = pca.explained_variance_ratio.head(k).sum() * pca.total_variance;
    EXPECT_NEAR(var, head, 1e-8);
    // Reconstruction residual carries the remaining variance.
    Matrix recon = (p * pca.components.leftCols(k).transpose()).rowwise() + pca.mean.transpose();
    const double resid = (x - recon).squaredNorm() / static_cast<double>(x.rows() - 1);
    EXPECT_NEAR(resid, pca.explained_variance_ratio.tail(6 - k).sum() * pca.total_variance, 1e-8);
  }
}

TEST(ProjectTrajectory, StartsAtProjectedOrigin) {
  auto p = small_model();
  auto data = sentences({4, 5, 6, 7});
  auto pca = fit_pca(collect_states(p, data, CollectMode::all));
  auto traj = model::forward(p, data[2].tokens.ids).trajectory;
  Matrix proj = project_trajectory(pca, traj, 2);
  EXPECT_EQ(proj.rows(), 7);
  Vector expected = -(pca.mean.transpose() * pca.components.leftCols(2)).transpose();
  EXPECT_LT((proj.row(0).transpose() - expected).norm(), 1e-12);
  for (Eigen::Index t = 0; t < proj.rows(); ++t) {
    Vector single = project(pca, Vector(traj.states.row(t).transpose()), 2);
    EXPECT_LT((single - proj.row(t).transpose()).norm(), 1e-12);
  }
}

TEST(Provenance, JsonLines) {
  auto p = small_model();
  auto s = collect_states(p, sentences({2, 1}), CollectMode::all);
  std::ostringstream os;
  write_provenance_jsonl(os, s, {"A", "B", "C"});
  EXPECT_EQ(os.str(),
            "{\"row\":0,\"sentence\":0,\"timestep\":1,\"label\":\"A\",\"final\":false}\n"
            "{\"row\":1,\"sentence\":0,\"timestep\":2,\"label\":\"A\",\"final\":true}\n"
            "{\"row\":2,\"sentence\":1,\"timestep\":1,\"label\":\"B\",\"final\":true}\n");
}
