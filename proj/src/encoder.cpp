#include "sgil/encoder.hpp"

#include <algorithm>
#include <tuple>

#include "sgil/errors.hpp"
#include "sgil/rng.hpp"

namespace sgil {

EmbeddingTables EmbeddingTables::init(std::size_t M, std::size_t N,
                                      std::size_t d, double stddev,
                                      std::uint64_t seed) {
  EmbeddingTables t;
  Rng ru = Rng::derive(seed, "init_user_embeddings", 0);
  Rng ri = Rng::derive(seed, "init_item_embeddings", 0);
  t.P0 = DenseMatrix::randn(M, d, stddev, ru);
  t.Q0 = DenseMatrix::randn(N, d, stddev, ri);
  return t;
}

CsrMatrix build_hetero_adjacency(const SocialGraph& social,
                                 const std::vector<double>& social_weights,
                                 const std::vector<IdPair>& interactions,
                                 std::size_t M, std::size_t N) {
  if (social_weights.size() != social.edges.size())
    throw ShapeError("one weight per social edge required");
  std::vector<std::tuple<std::size_t, std::size_t, double>> triplets;
  triplets.reserve(social.edges.size() + 2 * interactions.size());
  for (std::size_t e = 0; e < social.edges.size(); ++e) {
    const auto& [s, d] = social.edges[e];
    if (s >= M || d >= M)
      throw ShapeError("social edge endpoint outside user block");
    triplets.emplace_back(s, d, social_weights[e]);
  }
  for (const auto& [u, i] : interactions) {
    if (u >= M || i >= N)
      throw ShapeError("interaction outside user/item blocks");
    triplets.emplace_back(u, M + i, 1.0);
    triplets.emplace_back(M + i, u, 1.0);
  }
  return CsrMatrix::from_triplets(M + N, std::move(triplets));
}

HeteroAdjacency HeteroAdjacency::build(const SocialGraph& social,
                                       const std::vector<IdPair>& interactions,
                                       std::size_t M, std::size_t N) {
  std::vector<double> zeros(social.edges.size(), 0.0);
  CsrMatrix base = build_hetero_adjacency(social, zeros, interactions, M, N);

  HeteroAdjacency adj;
  adj.M = M;
  adj.N = N;
  adj.pattern = CsrPattern::from_csr(base);
  adj.base_weights = DenseMatrix(base.nnz(), 1);
  for (std::size_t e = 0; e < base.nnz(); ++e)
    adj.base_weights(e, 0) = base.edge_weights[e];

  adj.social_slot.resize(social.edges.size());
  for (std::size_t e = 0; e < social.edges.size(); ++e) {
    const auto& [s, d] = social.edges[e];
    const auto begin = base.col_indices.begin() + base.row_offsets[s];
    const auto end = base.col_indices.begin() + base.row_offsets[s + 1];
    const auto it = std::lower_bound(begin, end, d);
    adj.social_slot[e] =
        base.row_offsets[s] + static_cast<std::size_t>(it - begin);
  }
  return adj;
}

Tape::NodeId hetero_weights(Tape& t, const HeteroAdjacency& adj,
                            Tape::NodeId social_weights) {
  return t.scatter_to_base(social_weights, adj.social_slot, adj.base_weights);
}

Tape::NodeId normalize_adjacency(Tape& t, const HeteroAdjacency& adj,
                                 Tape::NodeId full_weights) {
  const CsrPattern& p = *adj.pattern;
  Tape::NodeId deg = t.segment_sum(full_weights, p.nnz_row, p.dim);
  Tape::NodeId rsq = t.rsqrt_guard(deg);
  Tape::NodeId f_row = t.gather_rows(rsq, p.nnz_row);
  Tape::NodeId f_col = t.gather_rows(rsq, p.col_indices);
  return t.mul(t.mul(full_weights, f_row), f_col);
}

PropagationNodes propagate(Tape& t, const HeteroAdjacency& adj,
                           Tape::NodeId normalized_weights, Tape::NodeId P0,
                           Tape::NodeId Q0, std::size_t L) {
  Tape::NodeId e = t.concat_rows(P0, Q0);
  Tape::NodeId acc = e;
  for (std::size_t l = 0; l < L; ++l) {
    e = t.spmm(adj.pattern, normalized_weights, e);
    acc = t.add(acc, e);
  }
  PropagationNodes out;
  out.embeddings = t.scale(acc, 1.0 / static_cast<double>(L + 1));
  out.P = t.slice_rows(out.embeddings, 0, adj.M);
  out.Q = t.slice_rows(out.embeddings, adj.M, adj.N);
  return out;
}

std::pair<DenseMatrix, DenseMatrix> propagate_value(
    const HeteroAdjacency& adj, const std::vector<double>& social_weights,
    const DenseMatrix& P0, const DenseMatrix& Q0, std::size_t L) {
  if (social_weights.size() != adj.social_slot.size())
    throw ShapeError("one weight per social edge required");
  const CsrPattern& p = *adj.pattern;

  CsrMatrix m;
  m.dim = p.dim;
  m.row_offsets = p.row_offsets;
  m.col_indices = p.col_indices;
  m.edge_weights.resize(p.nnz());
  for (std::size_t e = 0; e < p.nnz(); ++e)
    m.edge_weights[e] = adj.base_weights(e, 0);
  for (std::size_t e = 0; e < social_weights.size(); ++e)
    m.edge_weights[adj.social_slot[e]] = social_weights[e];
  m = symmetric_normalize(m);

  const std::size_t d = P0.cols();
  DenseMatrix e0(adj.dim(), d);
  for (std::size_t r = 0; r < adj.M; ++r)
    for (std::size_t c = 0; c < d; ++c) e0(r, c) = P0(r, c);
  for (std::size_t r = 0; r < adj.N; ++r)
    for (std::size_t c = 0; c < d; ++c) e0(adj.M + r, c) = Q0(r, c);

  DenseMatrix acc = e0;
  DenseMatrix cur = e0;
  for (std::size_t l = 0; l < L; ++l) {
    cur = spmm(m, cur);
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc.at_flat(i) += cur.at_flat(i);
  }
  const double inv = 1.0 / static_cast<double>(L + 1);
  for (std::size_t i = 0; i < acc.size(); ++i) acc.at_flat(i) *= inv;

  DenseMatrix P(adj.M, d), Q(adj.N, d);
  for (std::size_t r = 0; r < adj.M; ++r)
    for (std::size_t c = 0; c < d; ++c) P(r, c) = acc(r, c);
  for (std::size_t r = 0; r < adj.N; ++r)
    for (std::size_t c = 0; c < d; ++c) Q(r, c) = acc(adj.M + r, c);
  return {std::move(P), std::move(Q)};
}

}  // namespace sgil
