#pragma once

#include "sgil/dense.hpp"
#include "sgil/tape.hpp"

namespace sgil {

// Two-layer MLP: W2 * relu(W1 * x + b1) + b2, one scalar per input row.
// input is (n x 2d), W1 (2d x h), b1 (1 x h), W2 (h x 1), b2 (1 x 1).
inline Tape::NodeId mlp2_forward(Tape& t, Tape::NodeId input, Tape::NodeId w1,
                                 Tape::NodeId b1, Tape::NodeId w2,
                                 Tape::NodeId b2) {
  Tape::NodeId h = t.relu(t.add_row_broadcast(t.matmul(input, w1), b1));
  return t.add_row_broadcast(t.matmul(h, w2), b2);
}

inline DenseMatrix mlp2_forward_value(const DenseMatrix& input,
                                      const DenseMatrix& w1,
                                      const DenseMatrix& b1,
                                      const DenseMatrix& w2,
                                      const DenseMatrix& b2) {
  DenseMatrix h = DenseMatrix::matmul(input, w1);
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c)
      h(r, c) = std::max(h(r, c) + b1(0, c), 0.0);
  DenseMatrix out = DenseMatrix::matmul(h, w2);
  for (std::size_t r = 0; r < out.rows(); ++r) out(r, 0) += b2(0, 0);
  return out;
}

}  // namespace sgil
