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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnndyn/common.hpp"

namespace rnndyn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

struct SvdResult {
  Matrix u;                 // rows x r, orthonormal columns
  Vector singular_values;   // r values, non-increasing
  Matrix vt;                // r x cols, orthonormal rows
};

struct EigResult {
  ComplexVector eigenvalues;
  std::optional<ComplexMatrix> eigenvectors;  // columns, when requested
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
  }
}

}  // namespace detail

/// Thin SVD, m = U diag(s) Vt with r = min(rows, cols).
inline SvdResult svd(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("svd: empty matrix");
  detail::require_finite(m, "svd");
  Eigen::BDCSVD<Eigen::MatrixXd> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult out;
  out.u = solver.matrixU();
  out.singular_values = solver.singularValues();
  out.vt = solver.matrixV().transpose();
  return out;
}

/// Eigenvalues (and optionally eigenvectors) of a real square matrix.
inline EigResult eig_general(const Matrix& m, bool with_vectors = false) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eig_general: matrix is not square");
  if (m.rows() == 0) throw std::invalid_argument("eig_general: empty matrix");
  detail::require_finite(m, "eig_general");
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, with_vectors);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eig_general: QR iteration did not converge");
  }
  EigResult out;
  out.eigenvalues = solver.eigenvalues();
  if (with_vectors) out.eigenvectors = solver.eigenvectors();
  return out;
}

template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  double c = u.reshaped().dot(v.reshaped()) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

template <typename A, typename B>
double euclidean(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("euclidean: length mismatch");
  return (u.reshaped() - v.reshaped()).norm();
}

/// Population mean and standard deviation.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return out;
}

// Matrix CSV: one row per line, comma separated, "%.17g".

template <typename Derived>
void write_matrix_csv(std::ostream& os, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

/// Parses `rows` CSV lines of `cols` values each from the stream.
inline Matrix read_matrix_csv(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  std::string line;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(is, line)) throw DataError("matrix csv: expected " + std::to_string(rows) + " rows");
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= cols) throw DataError("matrix csv: too many columns in row " + std::to_string(r));
      try {
        m(r, c++) = std::stod(cell);
      } catch (const std::exception&) {
        throw DataError("matrix csv: bad number '" + cell + "' in row " + std::to_string(r));
      }
    }
    if (c != cols) throw DataError("matrix csv: expected " + std::to_string(cols) + " columns in row " + std::to_string(r));
  }
  return m;
}

/// Reads a whole CSV stream, inferring the shape.
inline Matrix read_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) throw DataError("matrix csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  return m;
}

}  // namespace rnndyn
