#pragma once

#include <algorithm>
#include <cstddef>
#include <tuple>
#include <vector>

#include "sgil/dense.hpp"
#include "sgil/errors.hpp"

namespace sgil {

// Square CSR matrix with nonnegative per-edge weights. Column indices are
// sorted within each row, so the nonzero layout is canonical for a given
// set of (row, col) pairs.
struct CsrMatrix {
  std::size_t dim = 0;
  std::vector<std::size_t> row_offsets;  // length dim + 1
  std::vector<std::size_t> col_indices;  // length nnz
  std::vector<double> edge_weights;      // length nnz

  std::size_t nnz() const { return col_indices.size(); }

  static CsrMatrix from_triplets(
      std::size_t dim, std::vector<std::tuple<std::size_t, std::size_t, double>> triplets) {
    for (const auto& [r, c, w] : triplets) {
      if (r >= dim || c >= dim)
        throw ShapeError("triplet (" + std::to_string(r) + "," +
                         std::to_string(c) + ") outside dim " +
                         std::to_string(dim));
      (void)w;
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const auto& a, const auto& b) {
                return std::tie(std::get<0>(a), std::get<1>(a)) <
                       std::tie(std::get<0>(b), std::get<1>(b));
              });
    CsrMatrix m;
    m.dim = dim;
    m.row_offsets.assign(dim + 1, 0);
    m.col_indices.reserve(triplets.size());
    m.edge_weights.reserve(triplets.size());
    for (const auto& [r, c, w] : triplets) {
      m.row_offsets[r + 1]++;
      m.col_indices.push_back(c);
      m.edge_weights.push_back(w);
    }
    for (std::size_t i = 0; i < dim; ++i) m.row_offsets[i + 1] += m.row_offsets[i];
    return m;
  }

  static CsrMatrix identity(std::size_t dim) {
    CsrMatrix m;
    m.dim = dim;
    m.row_offsets.resize(dim + 1);
    m.col_indices.resize(dim);
    m.edge_weights.assign(dim, 1.0);
    for (std::size_t i = 0; i <= dim; ++i) m.row_offsets[i] = i;
    for (std::size_t i = 0; i < dim; ++i) m.col_indices[i] = i;
    return m;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t e = row_offsets[i]; e < row_offsets[i + 1]; ++e)
        d(i, col_indices[e]) += edge_weights[e];
    return d;
  }
};

// y[i] = sum_j w_ij * x[j]
inline DenseMatrix spmm(const CsrMatrix& adj, const DenseMatrix& x) {
  if (adj.dim != x.rows())
    throw ShapeError("spmm: adjacency dim " + std::to_string(adj.dim) +
                     " vs input rows " + std::to_string(x.rows()));
  DenseMatrix y(adj.dim, x.cols());
  for (std::size_t i = 0; i < adj.dim; ++i) {
    for (std::size_t e = adj.row_offsets[i]; e < adj.row_offsets[i + 1]; ++e) {
      const double w = adj.edge_weights[e];
      const std::size_t j = adj.col_indices[e];
      for (std::size_t c = 0; c < x.cols(); ++c) y(i, c) += w * x(j, c);
    }
  }
  return y;
}

// Row-sum degrees d_i = sum_j w_ij.
inline std::vector<double> row_degrees(const CsrMatrix& adj) {
  std::vector<double> d(adj.dim, 0.0);
  for (std::size_t i = 0; i < adj.dim; ++i)
    for (std::size_t e = adj.row_offsets[i]; e < adj.row_offsets[i + 1]; ++e)
      d[i] += adj.edge_weights[e];
  return d;
}

// w'_ij = w_ij / sqrt(d_i * d_j). Zero-degree endpoints contribute zero
// instead of dividing; the sparsity pattern is unchanged.
inline CsrMatrix symmetric_normalize(const CsrMatrix& adj) {
  const std::vector<double> deg = row_degrees(adj);
  std::vector<double> rsqrt(adj.dim);
  for (std::size_t i = 0; i < adj.dim; ++i)
    rsqrt[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  CsrMatrix out = adj;
  for (std::size_t i = 0; i < adj.dim; ++i)
    for (std::size_t e = adj.row_offsets[i]; e < adj.row_offsets[i + 1]; ++e)
      out.edge_weights[e] = adj.edge_weights[e] * rsqrt[i] * rsqrt[adj.col_indices[e]];
  return out;
}

}  // namespace sgil
