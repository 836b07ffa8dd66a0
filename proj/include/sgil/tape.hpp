#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sgil/csr.hpp"
#include "sgil/dense.hpp"

namespace sgil {

// Fixed sparsity pattern for tape-level sparse products. The weights vary
// per forward pass; the pattern is built once and shared.
struct CsrPattern {
  std::size_t dim = 0;
  std::vector<std::size_t> row_offsets;
  std::vector<std::size_t> col_indices;
  std::vector<std::size_t> nnz_row;  // row index of each nonzero

  std::size_t nnz() const { return col_indices.size(); }

  static std::shared_ptr<const CsrPattern> from_csr(const CsrMatrix& m) {
    auto p = std::make_shared<CsrPattern>();
    p->dim = m.dim;
    p->row_offsets = m.row_offsets;
    p->col_indices = m.col_indices;
    p->nnz_row.resize(m.nnz());
    for (std::size_t i = 0; i < m.dim; ++i)
      for (std::size_t e = m.row_offsets[i]; e < m.row_offsets[i + 1]; ++e)
        p->nnz_row[e] = i;
    return p;
  }
};

// Reverse-mode tape over coarse-grained tensor ops. Nodes are created in
// topological order by construction; backward() walks them once in reverse
// and accumulates gradients into parent buffers, so shared subexpressions
// sum their contributions.
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(DenseMatrix value, std::string name = "");
  NodeId constant(DenseMatrix value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double c);
  NodeId add_scalar(NodeId x, double c);
  // a + c * b, both scalars or same shape
  NodeId add_scaled(NodeId a, NodeId b, double c);
  NodeId add_row_broadcast(NodeId x, NodeId row);

  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId softplus(NodeId x);
  NodeId neg(NodeId x);
  // min(x, hi); gradient passes only where x < hi
  NodeId clamp_max(NodeId x, double hi);
  // x > 0 -> 1/sqrt(x), else 0
  NodeId rsqrt_guard(NodeId x);

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId rows_dot(NodeId a, NodeId b);

  NodeId gather_rows(NodeId x, std::vector<std::size_t> idx);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId concat_rows(NodeId a, NodeId b);
  NodeId slice_rows(NodeId x, std::size_t start, std::size_t count);

  // x is (n x 1); out[s] = sum of x[i] with seg[i] == s
  NodeId segment_sum(NodeId x, std::vector<std::size_t> seg, std::size_t n_segs);
  // out = base (m x 1) with out[positions[i]] = x[i]; gradient flows to x only
  NodeId scatter_to_base(NodeId x, std::vector<std::size_t> positions,
                         DenseMatrix base);
  // y = A(w) * x over the fixed pattern; differentiable in w and x
  NodeId spmm(std::shared_ptr<const CsrPattern> pattern, NodeId weights, NodeId x);

  // rows scaled to unit L2 norm with an additive guard on the norm
  NodeId l2_normalize_rows(NodeId x, double eps = 1e-12);
  // mean over rows of (logsumexp(s_r) - s_r[target_r])
  NodeId softmax_cross_entropy(NodeId scores, std::vector<std::size_t> targets);

  NodeId sum_all(NodeId x);
  NodeId mean_all(NodeId x);
  NodeId sum_squares(NodeId x);

  // scalar reductions over a list of scalar nodes
  NodeId mean_of(const std::vector<NodeId>& xs);
  // population variance: sum (x - mean)^2 / K
  NodeId variance_of(const std::vector<NodeId>& xs);

  void backward(NodeId root);

  const DenseMatrix& value(NodeId id) const { return nodes_[id].value; }
  const DenseMatrix& grad(NodeId id) const;
  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool needs_grad = false;
    std::string name;
    std::function<void(Tape&)> backward;
  };

  NodeId push(DenseMatrix value, bool needs_grad,
              std::function<void(Tape&)> backward, std::string name = "");
  DenseMatrix& grad_buf(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace sgil
