#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "sgil/csr.hpp"
#include "sgil/dataset.hpp"
#include "sgil/dense.hpp"
#include "sgil/tape.hpp"

namespace sgil {

struct EmbeddingTables {
  DenseMatrix P0;  // M x d user table
  DenseMatrix Q0;  // N x d item table

  static EmbeddingTables init(std::size_t M, std::size_t N, std::size_t d,
                              double stddev, std::uint64_t seed);
};

// (M+N)^2 adjacency with blocks [S, R; R^T, 0]. Social edges carry the given
// soft weights; interaction edges carry weight 1 in both directions.
CsrMatrix build_hetero_adjacency(const SocialGraph& social,
                                 const std::vector<double>& social_weights,
                                 const std::vector<IdPair>& interactions,
                                 std::size_t M, std::size_t N);

// The fixed nonzero layout of the heterogeneous adjacency, built once per
// training run. Per-environment social weights are scattered into the base
// weight vector (interaction slots 1, social slots overwritten).
struct HeteroAdjacency {
  std::size_t M = 0;
  std::size_t N = 0;
  std::shared_ptr<const CsrPattern> pattern;
  DenseMatrix base_weights;               // nnz x 1
  std::vector<std::size_t> social_slot;   // canonical edge -> nnz position

  std::size_t dim() const { return M + N; }

  static HeteroAdjacency build(const SocialGraph& social,
                               const std::vector<IdPair>& interactions,
                               std::size_t M, std::size_t N);
};

// Scatters per-edge social weights into the full weight vector, then applies
// symmetric normalization on the tape: w'_ij = w_ij / sqrt(d_i d_j) with
// degrees recomputed from the soft weights.
Tape::NodeId hetero_weights(Tape& t, const HeteroAdjacency& adj,
                            Tape::NodeId social_weights);
Tape::NodeId normalize_adjacency(Tape& t, const HeteroAdjacency& adj,
                                 Tape::NodeId full_weights);

struct PropagationNodes {
  Tape::NodeId embeddings;  // (M+N) x d readout
  Tape::NodeId P;           // M x d
  Tape::NodeId Q;           // N x d
};

// E^{l+1} = A_norm E^l for l = 0..L-1; readout is the mean of E^0..E^L.
// normalized_weights must come from normalize_adjacency on the same tape.
PropagationNodes propagate(Tape& t, const HeteroAdjacency& adj,
                           Tape::NodeId normalized_weights, Tape::NodeId P0,
                           Tape::NodeId Q0, std::size_t L);

// Plain (non-tape) forward path used at inference time.
std::pair<DenseMatrix, DenseMatrix> propagate_value(
    const HeteroAdjacency& adj, const std::vector<double>& social_weights,
    const DenseMatrix& P0, const DenseMatrix& Q0, std::size_t L);

}  // namespace sgil
