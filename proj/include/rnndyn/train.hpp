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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "rnndyn/corpus.hpp"
#include "rnndyn/model.hpp"
#include "rnndyn/numerics.hpp"

namespace rnndyn::train {

using corpus::Example;
using model::ModelParams;

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 32;
  int patience = 2;
  int max_epochs = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0) || batch_size == 0 || patience < 1 || max_epochs < 1) {
      throw ConfigError("train config values must be positive");
    }
  }
};

/// -log softmax(logits)[label], max-subtracted.
inline double cross_entropy(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size()) throw std::out_of_range("cross_entropy: label out of range");
  if (!logits.allFinite()) throw std::invalid_argument("cross_entropy: non-finite logits");
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return std::max(0.0, lse - logits[label]);
}

inline Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Loss and gradients of one sentence, accumulated (unscaled) into `grads`.
inline double accumulate_sentence(const ModelParams& p, const Example& ex, ModelParams& grads) {
  const auto& cfg = p.config;
  const auto& tokens = ex.tokens.ids;
  if (tokens.empty()) throw std::invalid_argument("gradients: empty sequence");
  std::vector<model::StepCache> caches;
  caches.reserve(tokens.size());
  model::CellState s = model::CellState::zeros(cfg);
  for (int tok : tokens) {
    if (tok < 0 || tok >= p.embedding.rows()) throw std::out_of_range("gradients: token outside vocabulary");
    caches.push_back(model::cell_forward(p, s, p.embedding.row(tok).transpose()));
    s.h = caches.back().h;
    s.c = caches.back().c;
  }
  Vector logits = p.readout * s.h + p.readout_bias;
  const double loss = cross_entropy(logits, ex.label);

  Vector dlogits = softmax(logits);
  dlogits[ex.label] -= 1.0;
  grads.readout.noalias() += dlogits * s.h.transpose();
  grads.readout_bias += dlogits;

  Vector dh = p.readout.transpose() * dlogits;
  Vector dc = cfg.cell == model::CellType::lstm ? Vector::Zero(cfg.hidden_dim) : Vector();
  for (std::size_t t = tokens.size(); t-- > 0;) {
    model::StepGrad g = model::cell_backward(p, caches[t], dh, dc, grads);
    grads.embedding.row(tokens[t]) += g.dx.transpose();
    dh = std::move(g.dh_prev);
    if (cfg.cell == model::CellType::lstm) dc = std::move(g.dc_prev);
  }
  return loss;
}

struct GradResult {
  ModelParams grads;
  double loss = 0.0;  // mean over the batch
};

/// Exact (untruncated BPTT) gradient of the mean batch loss. Sentences are
/// processed independently and summed in batch order.
inline GradResult gradients(const ModelParams& p, std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  GradResult out{ModelParams::zeros(p.config), 0.0};
  for (const auto& ex : batch) out.loss += accumulate_sentence(p, ex, out.grads);
  const double scale = 1.0 / static_cast<double>(batch.size());
  out.loss *= scale;
  out.grads.for_each([&](std::string_view, auto& t) { t *= scale; });
  return out;
}

inline double mean_loss(const ModelParams& p, std::span<const Example> data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty data");
  double total = 0.0;
  for (const auto& ex : data) total += cross_entropy(model::forward(p, ex.tokens.ids).logits, ex.label);
  return total / static_cast<double>(data.size());
}

inline double evaluate(const ModelParams& p, std::span<const Example> data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty data");
  std::size_t correct = 0;
  for (const auto& ex : data) correct += model::predict(p, ex.tokens.ids) == ex.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  ModelParams m;
  ModelParams v;

  explicit AdamState(const model::ModelConfig& cfg) : m(ModelParams::zeros(cfg)), v(ModelParams::zeros(cfg)) {}
};

inline void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads, double learning_rate) {
  bool shapes_ok = true;
  auto check = [&](const auto& a, const auto& b) { shapes_ok &= a.rows() == b.rows() && a.cols() == b.cols(); };
  check(params.embedding, grads.embedding);
  check(params.w_in, grads.w_in);
  check(params.w_rec, grads.w_rec);
  check(params.bias, grads.bias);
  check(params.readout, grads.readout);
  check(params.readout_bias, grads.readout_bias);
  check(params.embedding, state.m.embedding);
  check(params.w_rec, state.m.w_rec);
  check(params.readout, state.m.readout);
  if (!shapes_ok) throw std::invalid_argument("adam_step: shape mismatch");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    p.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  update(params.embedding, grads.embedding, state.m.embedding, state.v.embedding);
  update(params.w_in, grads.w_in, state.m.w_in, state.v.w_in);
  update(params.w_rec, grads.w_rec, state.m.w_rec, state.v.w_rec);
  update(params.bias, grads.bias, state.m.bias, state.v.bias);
  update(params.readout, grads.readout, state.m.readout, state.v.readout);
  update(params.readout_bias, grads.readout_bias, state.m.readout_bias, state.v.readout_bias);
}

// ---------------------------------------------------------------------------
// Training loop

/// Validation-loss early stopping with best-epoch restoration.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records one epoch; returns true when training should stop.
  bool update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      wait_ = 0;
      improved_ = true;
    } else {
      ++wait_;
      improved_ = false;
    }
    return wait_ >= patience_;
  }

  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int wait_ = 0;
  int best_epoch_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int stopped_epoch = 0;
  int best_epoch = 0;

  void write_csv(std::ostream& os) const {
    os << "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& e : epochs) {
      os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
         << format_double(e.val_accuracy) << '\n';
    }
  }
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

/// Shuffled mini-batch Adam with early stopping on validation loss. The
/// returned parameters are those of the best validation epoch.
inline TrainResult train(const model::ModelConfig& model_config, const TrainConfig& cfg,
                         std::span<const Example> train_set, std::span<const Example> val_set,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw std::invalid_argument("train: empty train or validation set");
  TrainResult out{model::init_params(model_config), {}};
  ModelParams best = out.params;
  AdamState adam(model_config);
  EarlyStopping stopper(cfg.patience);

  std::vector<std::size_t> order(train_set.size());
  std::vector<Example> batch;
  batch.reserve(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
      GradResult g = gradients(out.params, batch);
      loss_sum += g.loss * static_cast<double>(batch.size());
      adam_step(adam, out.params, g.grads, cfg.learning_rate);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = mean_loss(out.params, val_set);
    rec.val_accuracy = evaluate(out.params, val_set);
    out.history.epochs.push_back(rec);
    out.history.stopped_epoch = epoch;
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.update(rec.val_loss);
    if (stopper.improved()) best = out.params;
    if (stop) break;
  }
  out.history.best_epoch = stopper.best_epoch();
  out.params = std::move(best);
  return out;
}

}  // namespace rnndyn::train
