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

// Recurrent intent classifiers: embedding -> single recurrent layer -> affine readout.
//
// Gate blocks are stacked row-wise in w_in (G*n x m), w_rec (G*n x n) and bias (G*n):
//
//   vanilla (G=1): h' = tanh(Wx + Uh + b)
//   gru     (G=3, blocks z, r, g):
//       z = sigmoid(Wz x + Uz h + bz),  r = sigmoid(Wr x + Ur h + br)
//       g = tanh(Wg x + Ug (r*h) + bg), h' = (1 - z)*h + z*g
//   lstm    (G=4, blocks i, f, g, o):
//       i, f, o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c')
//
// The readout is N x n; its rows are the readout vectors r_i.

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rnndyn/common.hpp"
#include "rnndyn/numerics.hpp"

namespace rnndyn::model {

enum class CellType { vanilla, gru, lstm };

inline int gate_count(CellType cell) {
  switch (cell) {
    case CellType::vanilla: return 1;
    case CellType::gru: return 3;
    case CellType::lstm: return 4;
  }
  return 1;
}

inline std::string to_string(CellType cell) {
  switch (cell) {
    case CellType::vanilla: return "vanilla";
    case CellType::gru: return "gru";
    case CellType::lstm: return "lstm";
  }
  return "?";
}

inline CellType parse_cell_type(std::string_view name) {
  if (name == "vanilla" || name == "rnn" || name == "simple") return CellType::vanilla;
  if (name == "gru") return CellType::gru;
  if (name == "lstm") return CellType::lstm;
  throw ConfigError("unknown cell type: " + std::string(name));
}

struct ModelConfig {
  CellType cell = CellType::gru;
  int embed_dim = 16;
  int hidden_dim = 16;
  int vocab_size = 1002;
  int n_classes = 7;
  std::uint64_t seed = 0;

  void validate() const {
    if (embed_dim < 1 || hidden_dim < 1 || vocab_size < 1 || n_classes < 1) {
      throw ConfigError("model dimensions must be >= 1");
    }
  }

  /// Dimension of the dynamical state: n, or 2n for the stacked LSTM (h, c).
  int state_dim() const { return cell == CellType::lstm ? 2 * hidden_dim : hidden_dim; }
};

struct ModelParams {
  ModelConfig config;
  Matrix embedding;     // V x m
  Matrix w_in;          // G*n x m
  Matrix w_rec;         // G*n x n
  Vector bias;          // G*n
  Matrix readout;       // N x n
  Vector readout_bias;  // N

  template <typename Fn>
  void for_each(Fn&& fn) {
    fn("embedding", embedding);
    fn("w_in", w_in);
    fn("w_rec", w_rec);
    fn("bias", bias);
    fn("readout", readout);
    fn("readout_bias", readout_bias);
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    fn("embedding", embedding);
    fn("w_in", w_in);
    fn("w_rec", w_rec);
    fn("bias", bias);
    fn("readout", readout);
    fn("readout_bias", readout_bias);
  }

  /// All tensors allocated with the configured shapes and filled with zeros.
  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    const int g = gate_count(cfg.cell);
    const int n = cfg.hidden_dim;
    ModelParams p;
    p.config = cfg;
    p.embedding = Matrix::Zero(cfg.vocab_size, cfg.embed_dim);
    p.w_in = Matrix::Zero(g * n, cfg.embed_dim);
    p.w_rec = Matrix::Zero(g * n, n);
    p.bias = Vector::Zero(g * n);
    p.readout = Matrix::Zero(cfg.n_classes, n);
    p.readout_bias = Vector::Zero(cfg.n_classes);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for_each([&](std::string_view, const auto& t) { total += static_cast<std::size_t>(t.size()); });
    return total;
  }
};

/// Glorot-uniform weights (L = sqrt(6 / (fan_in + fan_out)) per tensor), zero biases.
inline ModelParams init_params(const ModelConfig& cfg) {
  ModelParams p = ModelParams::zeros(cfg);
  std::mt19937_64 rng(cfg.seed);
  auto fill = [&](Matrix& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  fill(p.embedding);
  fill(p.w_in);
  fill(p.w_rec);
  fill(p.readout);
  return p;
}

struct CellState {
  Vector h;
  Vector c;  // LSTM only; empty otherwise

  static CellState zeros(const ModelConfig& cfg) {
    CellState s;
    s.h = Vector::Zero(cfg.hidden_dim);
    if (cfg.cell == CellType::lstm) s.c = Vector::Zero(cfg.hidden_dim);
    return s;
  }
};

/// Flattens a cell state into the dynamical-state vector (h, or stacked (h, c)).
inline Vector pack_state(const CellState& s) {
  if (s.c.size() == 0) return s.h;
  Vector out(s.h.size() + s.c.size());
  out << s.h, s.c;
  return out;
}

inline CellState unpack_state(const ModelConfig& cfg, const Vector& v) {
  if (v.size() != cfg.state_dim()) throw std::invalid_argument("unpack_state: dimension mismatch");
  CellState s;
  const int n = cfg.hidden_dim;
  s.h = v.head(n);
  if (cfg.cell == CellType::lstm) s.c = v.tail(n);
  return s;
}

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Everything a single update needs for its backward pass and Jacobians.
struct StepCache {
  Vector x;       // embedded input
  Vector h_prev;
  Vector c_prev;  // LSTM
  Vector gates;   // post-activation gate values, G*n
  Vector h;       // new hidden state
  Vector c;       // new cell memory (LSTM)
};

inline StepCache cell_forward(const ModelParams& p, const CellState& state, const Eigen::Ref<const Vector>& x) {
  const int n = p.config.hidden_dim;
  StepCache k;
  k.x = x;
  k.h_prev = state.h;
  k.c_prev = state.c;
  switch (p.config.cell) {
    case CellType::vanilla: {
      k.gates = (p.w_in * x + p.w_rec * state.h + p.bias).array().tanh();
      k.h = k.gates;
      break;
    }
    case CellType::gru: {
      k.gates.resize(3 * n);
      Vector zr = p.w_in.topRows(2 * n) * x + p.w_rec.topRows(2 * n) * state.h + p.bias.head(2 * n);
      k.gates.head(2 * n) = zr.unaryExpr([](double a) { return sigmoid(a); });
      const auto z = k.gates.segment(0, n);
      const auto r = k.gates.segment(n, n);
      Vector rh = r.cwiseProduct(state.h);
      k.gates.segment(2 * n, n) =
          (p.w_in.bottomRows(n) * x + p.w_rec.bottomRows(n) * rh + p.bias.tail(n)).array().tanh();
      const auto g = k.gates.segment(2 * n, n);
      k.h = (Vector::Ones(n) - z).cwiseProduct(state.h) + z.cwiseProduct(g);
      break;
    }
    case CellType::lstm: {
      Vector a = p.w_in * x + p.w_rec * state.h + p.bias;
      k.gates.resize(4 * n);
      for (int j = 0; j < 4 * n; ++j) {
        k.gates[j] = (j >= 2 * n && j < 3 * n) ? std::tanh(a[j]) : sigmoid(a[j]);
      }
      const auto i = k.gates.segment(0, n);
      const auto f = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      const auto o = k.gates.segment(3 * n, n);
      k.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
      k.h = o.cwiseProduct(k.c.array().tanh().matrix());
      break;
    }
  }
  return k;
}

/// One recurrence step driven by a vocabulary token.
inline CellState step(const ModelParams& p, const CellState& state, int token_id) {
  if (token_id < 0 || token_id >= p.embedding.rows()) {
    throw std::out_of_range("step: token id " + std::to_string(token_id) + " outside vocabulary");
  }
  StepCache k = cell_forward(p, state, p.embedding.row(token_id).transpose());
  return {std::move(k.h), std::move(k.c)};
}

/// Derivative of the packed new state with respect to the packed previous state.
inline Matrix state_jacobian(const ModelParams& p, const StepCache& k) {
  const int n = p.config.hidden_dim;
  switch (p.config.cell) {
    case CellType::vanilla: {
      Vector d = (1.0 - k.h.array().square()).matrix();
      return d.asDiagonal() * p.w_rec;
    }
    case CellType::gru: {
      const auto z = k.gates.segment(0, n);
      const auto r = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      Vector dz = ((g - k.h_prev).array() * z.array() * (1.0 - z.array())).matrix();
      Vector dg = (z.array() * (1.0 - g.array().square())).matrix();
      Vector dr = (k.h_prev.array() * r.array() * (1.0 - r.array())).matrix();
      Matrix drh = dr.asDiagonal() * p.w_rec.middleRows(n, n);
      drh.diagonal() += r;
      Matrix j = dz.asDiagonal() * p.w_rec.topRows(n);
      j += dg.asDiagonal() * (p.w_rec.bottomRows(n) * drh);
      j.diagonal() += (Vector::Ones(n) - z);
      return j;
    }
    case CellType::lstm: {
      const auto i = k.gates.segment(0, n);
      const auto f = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      const auto o = k.gates.segment(3 * n, n);
      Vector tc = k.c.array().tanh();
      Vector di = (k.gates.segment(2 * n, n).array() * i.array() * (1.0 - i.array())).matrix();
      Vector df = (k.c_prev.array() * f.array() * (1.0 - f.array())).matrix();
      Vector dg = (i.array() * (1.0 - g.array().square())).matrix();
      Vector dout = (tc.array() * o.array() * (1.0 - o.array())).matrix();
      Vector dhc = (o.array() * (1.0 - tc.array().square())).matrix();
      // c' rows
      Matrix dc_dh = di.asDiagonal() * p.w_rec.middleRows(0, n);
      dc_dh += df.asDiagonal() * p.w_rec.middleRows(n, n);
      dc_dh += dg.asDiagonal() * p.w_rec.middleRows(2 * n, n);
      Matrix j = Matrix::Zero(2 * n, 2 * n);
      j.topLeftCorner(n, n) = dout.asDiagonal() * p.w_rec.middleRows(3 * n, n);
      j.topLeftCorner(n, n) += dhc.asDiagonal() * dc_dh;
      j.topRightCorner(n, n) = (dhc.array() * f.array()).matrix().asDiagonal();
      j.bottomLeftCorner(n, n) = dc_dh;
      j.bottomRightCorner(n, n) = f.asDiagonal();
      return j;
    }
  }
  return {};
}

/// Derivative of the packed new state with respect to the embedded input vector.
inline Matrix input_jacobian(const ModelParams& p, const StepCache& k) {
  const int n = p.config.hidden_dim;
  switch (p.config.cell) {
    case CellType::vanilla: {
      Vector d = (1.0 - k.h.array().square()).matrix();
      return d.asDiagonal() * p.w_in;
    }
    case CellType::gru: {
      const auto z = k.gates.segment(0, n);
      const auto r = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      Vector dz = ((g - k.h_prev).array() * z.array() * (1.0 - z.array())).matrix();
      Vector dg = (z.array() * (1.0 - g.array().square())).matrix();
      Vector dr = (k.h_prev.array() * r.array() * (1.0 - r.array())).matrix();
      Matrix inner = p.w_in.bottomRows(n) + p.w_rec.bottomRows(n) * (dr.asDiagonal() * p.w_in.middleRows(n, n));
      Matrix j = dz.asDiagonal() * p.w_in.topRows(n);
      j += dg.asDiagonal() * inner;
      return j;
    }
    case CellType::lstm: {
      const auto i = k.gates.segment(0, n);
      const auto f = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      const auto o = k.gates.segment(3 * n, n);
      Vector tc = k.c.array().tanh();
      Vector di = (g.array() * i.array() * (1.0 - i.array())).matrix();
      Vector df = (k.c_prev.array() * f.array() * (1.0 - f.array())).matrix();
      Vector dg = (i.array() * (1.0 - g.array().square())).matrix();
      Vector dout = (tc.array() * o.array() * (1.0 - o.array())).matrix();
      Vector dhc = (o.array() * (1.0 - tc.array().square())).matrix();
      Matrix dc_dx = di.asDiagonal() * p.w_in.middleRows(0, n);
      dc_dx += df.asDiagonal() * p.w_in.middleRows(n, n);
      dc_dx += dg.asDiagonal() * p.w_in.middleRows(2 * n, n);
      Matrix j(2 * n, p.config.embed_dim);
      j.topRows(n) = dout.asDiagonal() * p.w_in.middleRows(3 * n, n);
      j.topRows(n) += dhc.asDiagonal() * dc_dx;
      j.bottomRows(n) = dc_dx;
      return j;
    }
  }
  return {};
}

/// Accumulates parameter gradients of one step into `grads` and returns the
/// gradients flowing into the previous state (dh_prev, dc_prev) and the input.
struct StepGrad {
  Vector dh_prev;
  Vector dc_prev;
  Vector dx;
};

inline StepGrad cell_backward(const ModelParams& p, const StepCache& k, const Vector& dh, const Vector& dc,
                              ModelParams& grads) {
  const int n = p.config.hidden_dim;
  StepGrad out;
  switch (p.config.cell) {
    case CellType::vanilla: {
      Vector da = (dh.array() * (1.0 - k.h.array().square())).matrix();
      grads.w_in.noalias() += da * k.x.transpose();
      grads.w_rec.noalias() += da * k.h_prev.transpose();
      grads.bias += da;
      out.dh_prev = p.w_rec.transpose() * da;
      out.dx = p.w_in.transpose() * da;
      break;
    }
    case CellType::gru: {
      const auto z = k.gates.segment(0, n);
      const auto r = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      Vector da(3 * n);
      auto da_z = da.segment(0, n);
      auto da_r = da.segment(n, n);
      auto da_g = da.segment(2 * n, n);
      da_z = (dh.array() * (g - k.h_prev).array() * z.array() * (1.0 - z.array())).matrix();
      da_g = (dh.array() * z.array() * (1.0 - g.array().square())).matrix();
      Vector d_rh = p.w_rec.bottomRows(n).transpose() * da_g;
      da_r = (d_rh.array() * k.h_prev.array() * r.array() * (1.0 - r.array())).matrix();
      Vector rh = r.cwiseProduct(k.h_prev);

      grads.w_in.noalias() += da * k.x.transpose();
      grads.w_rec.topRows(2 * n).noalias() += da.head(2 * n) * k.h_prev.transpose();
      grads.w_rec.bottomRows(n).noalias() += da_g * rh.transpose();
      grads.bias += da;

      out.dh_prev = dh.cwiseProduct(Vector::Ones(n) - z) + d_rh.cwiseProduct(r);
      out.dh_prev.noalias() += p.w_rec.topRows(2 * n).transpose() * da.head(2 * n);
      out.dx = p.w_in.transpose() * da;
      break;
    }
    case CellType::lstm: {
      const auto i = k.gates.segment(0, n);
      const auto f = k.gates.segment(n, n);
      const auto g = k.gates.segment(2 * n, n);
      const auto o = k.gates.segment(3 * n, n);
      Vector tc = k.c.array().tanh();
      Vector dct = dc + (dh.array() * o.array() * (1.0 - tc.array().square())).matrix();
      Vector da(4 * n);
      da.segment(0, n) = (dct.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
      da.segment(n, n) = (dct.array() * k.c_prev.array() * f.array() * (1.0 - f.array())).matrix();
      da.segment(2 * n, n) = (dct.array() * i.array() * (1.0 - g.array().square())).matrix();
      da.segment(3 * n, n) = (dh.array() * tc.array() * o.array() * (1.0 - o.array())).matrix();
      grads.w_in.noalias() += da * k.x.transpose();
      grads.w_rec.noalias() += da * k.h_prev.transpose();
      grads.bias += da;
      out.dh_prev = p.w_rec.transpose() * da;
      out.dc_prev = dct.cwiseProduct(f);
      out.dx = p.w_in.transpose() * da;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward passes

/// States h_0..h_T (rows) plus, for LSTM, cell memories c_0..c_T.
struct HiddenTrajectory {
  Matrix states;
  Matrix cells;
  std::vector<int> tokens;  // tokens[t] drives the transition states[t] -> states[t+1]

  std::size_t length() const { return tokens.size(); }
};

struct ForwardResult {
  HiddenTrajectory trajectory;
  Vector logits;
};

inline ForwardResult forward(const ModelParams& p, const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty sequence");
  const ModelConfig& cfg = p.config;
  const auto t_len = static_cast<Eigen::Index>(tokens.size());
  ForwardResult out;
  out.trajectory.tokens = tokens;
  out.trajectory.states = Matrix::Zero(t_len + 1, cfg.hidden_dim);
  if (cfg.cell == CellType::lstm) out.trajectory.cells = Matrix::Zero(t_len + 1, cfg.hidden_dim);
  CellState s = CellState::zeros(cfg);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    s = step(p, s, tokens[static_cast<std::size_t>(t)]);
    out.trajectory.states.row(t + 1) = s.h.transpose();
    if (cfg.cell == CellType::lstm) out.trajectory.cells.row(t + 1) = s.c.transpose();
  }
  out.logits = p.readout * s.h + p.readout_bias;
  return out;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline int argmax(const Vector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

inline int predict(const ModelParams& p, const std::vector<int>& tokens) { return argmax(forward(p, tokens).logits); }

// ---------------------------------------------------------------------------
// Checkpoints
//
// Line 1: a JSON header {"format", "version", "config", "labels", "tensors"}.
// Then per tensor: "# <name> <rows> <cols>" followed by <rows> CSV lines at %.17g.
// Vectors are stored as a single row.

inline void save_checkpoint(std::ostream& os, const ModelParams& p, const std::vector<std::string>& labels) {
  nlohmann::ordered_json header;
  header["format"] = "rnndyn-checkpoint";
  header["version"] = 1;
  header["config"] = {{"cell", to_string(p.config.cell)},   {"embed_dim", p.config.embed_dim},
                      {"hidden_dim", p.config.hidden_dim},  {"vocab_size", p.config.vocab_size},
                      {"n_classes", p.config.n_classes},    {"seed", p.config.seed}};
  header["labels"] = labels;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  p.for_each([&](std::string_view name, const auto& t) {
    tensors.push_back({{"name", name}, {"size", t.size()}});
  });
  header["tensors"] = tensors;
  os << header.dump() << '\n';
  p.for_each([&](std::string_view name, const auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (T::ColsAtCompileTime == 1) {
      os << "# " << name << ' ' << 1 << ' ' << t.size() << '\n';
      write_matrix_csv(os, t.transpose());
    } else {
      os << "# " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
      write_matrix_csv(os, t);
    }
  });
}

struct Checkpoint {
  ModelParams params;
  std::vector<std::string> labels;
};

inline Checkpoint load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("checkpoint: empty stream");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header (") + e.what() + ")");
  }
  if (header.value("format", "") != "rnndyn-checkpoint") throw DataError("checkpoint: unknown format");
  ModelConfig cfg;
  const auto& c = header.at("config");
  cfg.cell = parse_cell_type(c.at("cell").get<std::string>());
  cfg.embed_dim = c.at("embed_dim").get<int>();
  cfg.hidden_dim = c.at("hidden_dim").get<int>();
  cfg.vocab_size = c.at("vocab_size").get<int>();
  cfg.n_classes = c.at("n_classes").get<int>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  Checkpoint out;
  out.params = ModelParams::zeros(cfg);
  out.labels = header.at("labels").get<std::vector<std::string>>();
  out.params.for_each([&](std::string_view name, auto& t) {
    if (!std::getline(is, line)) throw DataError("checkpoint: missing tensor " + std::string(name));
    std::istringstream hdr(line);
    std::string hash, got;
    Eigen::Index rows = 0, cols = 0;
    hdr >> hash >> got >> rows >> cols;
    if (hash != "#" || got != name) throw DataError("checkpoint: expected tensor " + std::string(name));
    Matrix m = read_matrix_csv(is, rows, cols);
    using T = std::decay_t<decltype(t)>;
    if constexpr (T::ColsAtCompileTime == 1) {
      if (m.size() != t.size()) throw DataError("checkpoint: shape mismatch for " + std::string(name));
      t = m.reshaped();
    } else {
      if (m.rows() != t.rows() || m.cols() != t.cols()) {
        throw DataError("checkpoint: shape mismatch for " + std::string(name));
      }
      t = m;
    }
  });
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& p,
                            const std::vector<std::string>& labels) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  save_checkpoint(os, p, labels);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  return load_checkpoint(is);
}

}  // namespace rnndyn::model
