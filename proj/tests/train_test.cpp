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

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "rnndyn/train.hpp"

using namespace rnndyn;
using namespace rnndyn::train;
using rnndyn::model::CellType;
using rnndyn::model::ModelConfig;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

corpus::Example ex(std::vector<int> ids, int label) { return {{std::move(ids)}, label}; }

}  // namespace

TEST(CrossEntropy, KnownValues) {
  EXPECT_NEAR(cross_entropy(Vector::Constant(7, 0.3), 4), std::log(7.0), 1e-12);
  EXPECT_NEAR(cross_entropy(Vector::Constant(7, 0.3), 4), 1.945910, 1e-6);
  Vector saturated = Vector::Zero(7);
  saturated[2] = 30.0;
  EXPECT_LT(cross_entropy(saturated, 2), 1e-12);
  EXPECT_GE(cross_entropy(saturated, 2), 0.0);
  // ln(e + e^2 + e^3) - 3, evaluated directly.
  EXPECT_NEAR(cross_entropy(vec({1, 2, 3}), 2), 0.40760596444438013, 1e-12);
}

TEST(CrossEntropy, Errors) {
  EXPECT_THROW(cross_entropy(vec({1, std::numeric_limits<double>::infinity()}), 0), std::invalid_argument);
  EXPECT_THROW(cross_entropy(vec({1, 2}), 2), std::out_of_range);
}

TEST(Gradients, MatchFiniteDifferencesForAllCells) {
  for (auto cell : {CellType::vanilla, CellType::gru, CellType::lstm}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto pr = gradcheck::make_problem(cell, 3 + static_cast<int>(seed), 2 + 2 * static_cast<int>(seed), 6, seed);
      for (const auto& e : gradcheck::check_gradients(pr)) {
        EXPECT_LT(e.max_relative, 1e-4) << model::to_string(cell) << " seed " << seed << " tensor " << e.name;
      }
    }
  }
}

TEST(Gradients, UnusedEmbeddingRowsAreZero) {
  auto pr = gradcheck::make_problem(CellType::gru, 4, 4, 6, 9);
  auto g = gradients(pr.params, pr.batch).grads;
  for (int unused : {0, 1, 10, 11}) EXPECT_TRUE(g.embedding.row(unused).isZero());
}

TEST(Gradients, DuplicatedSampleKeepsMean) {
  auto pr = gradcheck::make_problem(CellType::lstm, 3, 3, 5, 4);
  std::vector<corpus::Example> one{pr.batch[0]}, two{pr.batch[0], pr.batch[0]};
  auto a = gradients(pr.params, one), b = gradients(pr.params, two);
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  EXPECT_LT((a.grads.w_rec - b.grads.w_rec).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((a.grads.embedding - b.grads.embedding).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(gradients(pr.params, {}), std::invalid_argument);
}

namespace {

ModelConfig scalar_config() {
  ModelConfig c;
  c.cell = CellType::vanilla;
  c.embed_dim = 1;
  c.hidden_dim = 1;
  c.vocab_size = 1;
  c.n_classes = 1;
  return c;
}

}  // namespace

TEST(Adam, ZeroGradsLeaveParamsUnchanged) {
  auto p = model::init_params(scalar_config());
  auto before = p;
  AdamState st(p.config);
  adam_step(st, p, model::ModelParams::zeros(p.config), 5e-4);
  EXPECT_EQ(p.w_rec, before.w_rec);
  EXPECT_EQ(p.embedding, before.embedding);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepIsSignTimesLearningRate) {
  auto pr = gradcheck::make_problem(CellType::gru, 3, 3, 4, 2);
  auto p = pr.params;
  auto g = model::ModelParams::zeros(p.config);
  std::mt19937_64 rng(1);
  g.w_rec = oracle::random_matrix(static_cast<int>(g.w_rec.rows()), static_cast<int>(g.w_rec.cols()), rng);
  AdamState st(p.config);
  adam_step(st, p, g, 5e-4);
  for (Eigen::Index i = 0; i < g.w_rec.size(); ++i) {
    const double delta = p.w_rec.data()[i] - pr.params.w_rec.data()[i];
    const double sign = g.w_rec.data()[i] > 0 ? 1.0 : -1.0;
    EXPECT_NEAR(delta, -5e-4 * sign, 1e-9);
  }
}

TEST(Adam, TwoStepsOnScalarQuadraticMatchHandTrace) {
  // Loss 0.5 * p^2 on every scalar parameter, so grad = p.
  auto p = model::ModelParams::zeros(scalar_config());
  p.w_rec(0, 0) = 1.5;
  AdamState st(p.config);
  const double lr = 0.1;
  double x = 1.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    auto g = model::ModelParams::zeros(p.config);
    g.w_rec(0, 0) = p.w_rec(0, 0);
    adam_step(st, p, g, lr);

    const double grad = x;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    x -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p.w_rec(0, 0), x, 1e-12);
  }
}

TEST(Adam, ShapeMismatchThrows) {
  auto p = model::init_params(scalar_config());
  auto other = scalar_config();
  other.hidden_dim = 2;
  AdamState st(p.config);
  EXPECT_THROW(adam_step(st, p, model::ModelParams::zeros(other), 1e-3), std::invalid_argument);
}

TEST(Adam, LossDecreasesOnFixedBatch) {
  for (auto cell : {CellType::vanilla, CellType::gru, CellType::lstm}) {
    auto pr = gradcheck::make_problem(cell, 4, 5, 6, 11);
    auto p = model::init_params(pr.params.config);
    AdamState st(p.config);
    double prev = gradients(p, pr.batch).loss;
    for (int it = 0; it < 50; ++it) {
      auto g = gradients(p, pr.batch);
      adam_step(st, p, g.grads, 5e-4);
      const double now = mean_loss(p, pr.batch);
      EXPECT_LE(now, prev + 1e-6) << model::to_string(cell) << " step " << it;
      prev = now;
    }
  }
}

TEST(EarlyStopping, WorseningLossStopsAfterPatience) {
  EarlyStopping es(2);
  EXPECT_FALSE(es.update(1.0));
  EXPECT_FALSE(es.update(1.1));
  EXPECT_TRUE(es.update(1.2));
  EXPECT_EQ(es.best_epoch(), 1);
}

TEST(EarlyStopping, ImprovementResetsPatience) {
  EarlyStopping es(2);
  EXPECT_FALSE(es.update(1.0));
  EXPECT_FALSE(es.update(1.0));  // equal is not an improvement
  EXPECT_FALSE(es.update(0.5));
  EXPECT_FALSE(es.update(0.6));
  EXPECT_TRUE(es.update(0.7));
  EXPECT_EQ(es.best_epoch(), 3);
}

namespace {

std::vector<corpus::Example> toy_corpus() {
  // 10 sentences, 3 intents, keyed by distinct words.
  return {ex({2, 3, 4}, 0), ex({3, 2, 5}, 0), ex({4, 2}, 0),     ex({6, 7, 8}, 1),     ex({7, 6}, 1),
          ex({8, 6, 9, 7}, 1), ex({10, 11}, 2), ex({11, 12, 10}, 2), ex({12, 10, 3}, 2), ex({2, 6, 10}, 0)};
}

}  // namespace

TEST(Train, OverfitsToyCorpus) {
  auto data = toy_corpus();
  ModelConfig mc;
  mc.cell = CellType::gru;
  mc.embed_dim = 8;
  mc.hidden_dim = 8;
  mc.vocab_size = 13;
  mc.n_classes = 3;
  mc.seed = 4;
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 2;
  tc.patience = 50;
  tc.max_epochs = 50;
  auto r = train::train(mc, tc, data, data);
  EXPECT_EQ(evaluate(r.params, data), 1.0);
  EXPECT_LE(r.history.stopped_epoch, 50);
  EXPECT_EQ(r.history.epochs.size(), static_cast<std::size_t>(r.history.stopped_epoch));
}

TEST(Train, DeterministicAndBestEpochRestored) {
  auto data = toy_corpus();
  ModelConfig mc;
  mc.cell = CellType::lstm;
  mc.embed_dim = 4;
  mc.hidden_dim = 4;
  mc.vocab_size = 13;
  mc.n_classes = 3;
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.batch_size = 3;
  auto a = train::train(mc, tc, data, data);
  auto b = train::train(mc, tc, data, data);
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    EXPECT_EQ(a.history.epochs[i].train_loss, b.history.epochs[i].train_loss);
    EXPECT_EQ(a.history.epochs[i].val_loss, b.history.epochs[i].val_loss);
  }
  EXPECT_EQ(a.params.w_rec, b.params.w_rec);
  const auto& best = a.history.epochs[static_cast<std::size_t>(a.history.best_epoch - 1)];
  EXPECT_NEAR(mean_loss(a.params, data), best.val_loss, 1e-15);
}

TEST(Evaluate, Fractions) {
  model::ModelConfig mc;
  mc.cell = CellType::vanilla;
  mc.vocab_size = 5;
  mc.n_classes = 7;
  auto p = model::ModelParams::zeros(mc);
  p.readout_bias[2] = 1.0;  // always predicts 2
  std::vector<corpus::Example> all2{ex({1}, 2), ex({2}, 2), ex({3}, 2), ex({4}, 2), ex({1, 2}, 2)};
  EXPECT_EQ(evaluate(p, all2), 1.0);
  std::vector<corpus::Example> three_of_four{ex({1}, 2), ex({2}, 2), ex({3}, 2), ex({4}, 0)};
  EXPECT_EQ(evaluate(p, three_of_four), 0.75);
  EXPECT_THROW(evaluate(p, {}), std::invalid_argument);
}

TEST(Evaluate, RandomModelIsAtChanceOnBalancedLabels) {
  model::ModelConfig mc;
  mc.cell = CellType::gru;
  mc.embed_dim = 8;
  mc.hidden_dim = 8;
  mc.vocab_size = 50;
  mc.n_classes = 7;
  mc.seed = 3;
  auto p = model::init_params(mc);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> tok(2, 49), len(2, 10);
  std::vector<corpus::Example> data;
  for (int i = 0; i < 1400; ++i) {
    corpus::Example e;
    for (int t = len(rng); t > 0; --t) e.tokens.ids.push_back(tok(rng));
    e.label = i % 7;
    data.push_back(e);
  }
  // Labels cycle independently of the tokens, so an untrained model can only guess.
  EXPECT_NEAR(evaluate(p, data), 1.0 / 7.0, 0.05);
}
