#include "sgil/tape.hpp"

#include <algorithm>
#include <cmath>

#include "sgil/errors.hpp"

namespace sgil {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Tape::NodeId Tape::push(DenseMatrix value, bool needs_grad,
                        std::function<void(Tape&)> backward, std::string name) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backward = std::move(backward);
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(DenseMatrix value, std::string name) {
  return push(std::move(value), true, nullptr, std::move(name));
}

Tape::NodeId Tape::constant(DenseMatrix value) {
  return push(std::move(value), false, nullptr);
}

const DenseMatrix& Tape::grad(NodeId id) const {
  if (!nodes_[id].needs_grad)
    throw Error("grad requested for a node that does not require gradients");
  return nodes_[id].grad;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (!va.same_shape(vb))
    throw ShapeError("add " + va.shape_str() + " vs " + vb.shape_str());
  DenseMatrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.at_flat(i) += vb.at_flat(i);
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb.at_flat(i) += g.at_flat(i);
      }
    };
  return self;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (!va.same_shape(vb))
    throw ShapeError("sub " + va.shape_str() + " vs " + vb.shape_str());
  DenseMatrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.at_flat(i) -= vb.at_flat(i);
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb.at_flat(i) -= g.at_flat(i);
      }
    };
  return self;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (!va.same_shape(vb))
    throw ShapeError("mul " + va.shape_str() + " vs " + vb.shape_str());
  DenseMatrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.at_flat(i) *= vb.at_flat(i);
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& va = t.value(a);
      const auto& vb = t.value(b);
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.at_flat(i) += g.at_flat(i) * vb.at_flat(i);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.size(); ++i)
          gb.at_flat(i) += g.at_flat(i) * va.at_flat(i);
      }
    };
  return self;
}

Tape::NodeId Tape::scale(NodeId x, double c) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out.at_flat(i) *= c;
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, c](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx.at_flat(i) += c * g.at_flat(i);
    };
  return self;
}

Tape::NodeId Tape::add_scalar(NodeId x, double c) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out.at_flat(i) += c;
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx.at_flat(i) += g.at_flat(i);
    };
  return self;
}

Tape::NodeId Tape::add_scaled(NodeId a, NodeId b, double c) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (!va.same_shape(vb))
    throw ShapeError("add_scaled " + va.shape_str() + " vs " + vb.shape_str());
  DenseMatrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at_flat(i) += c * vb.at_flat(i);
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b, c](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < g.size(); ++i)
          gb.at_flat(i) += c * g.at_flat(i);
      }
    };
  return self;
}

Tape::NodeId Tape::add_row_broadcast(NodeId x, NodeId row) {
  const auto& vx = value(x);
  const auto& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != vx.cols())
    throw ShapeError("add_row_broadcast " + vx.shape_str() + " + " +
                     vr.shape_str());
  DenseMatrix out = vx;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vr(0, c);
  const bool ng = needs_grad(x) || needs_grad(row);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, row](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(x)) {
        auto& gx = t.grad_buf(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.at_flat(i) += g.at_flat(i);
      }
      if (t.needs_grad(row)) {
        auto& gr = t.grad_buf(row);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
      }
    };
  return self;
}

Tape::NodeId Tape::relu(NodeId x) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at_flat(i) = std::max(out.at_flat(i), 0.0);
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& vx = t.value(x);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (vx.at_flat(i) > 0.0) gx.at_flat(i) += g.at_flat(i);
    };
  return self;
}

Tape::NodeId Tape::sigmoid(NodeId x) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at_flat(i) = stable_sigmoid(out.at_flat(i));
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& s = t.value(self);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double si = s.at_flat(i);
        gx.at_flat(i) += g.at_flat(i) * si * (1.0 - si);
      }
    };
  return self;
}

Tape::NodeId Tape::softplus(NodeId x) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at_flat(i) = stable_softplus(out.at_flat(i));
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& vx = t.value(x);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        gx.at_flat(i) += g.at_flat(i) * stable_sigmoid(vx.at_flat(i));
    };
  return self;
}

Tape::NodeId Tape::neg(NodeId x) { return scale(x, -1.0); }

Tape::NodeId Tape::clamp_max(NodeId x, double hi) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at_flat(i) = std::min(out.at_flat(i), hi);
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, hi](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& vx = t.value(x);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (vx.at_flat(i) < hi) gx.at_flat(i) += g.at_flat(i);
    };
  return self;
}

Tape::NodeId Tape::rsqrt_guard(NodeId x) {
  DenseMatrix out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = out.at_flat(i);
    out.at_flat(i) = v > 0.0 ? 1.0 / std::sqrt(v) : 0.0;
  }
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& vx = t.value(x);
      const auto& out = t.value(self);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = vx.at_flat(i);
        if (v > 0.0) {
          // d(v^-1/2)/dv = -1/2 v^-3/2 = -out / (2 v)
          gx.at_flat(i) += g.at_flat(i) * (-0.5 * out.at_flat(i) / v);
        }
      }
    };
  return self;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  DenseMatrix out = DenseMatrix::matmul(value(a), value(b));
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) {
        DenseMatrix da = DenseMatrix::matmul_nt(g, t.value(b));
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < da.size(); ++i)
          ga.at_flat(i) += da.at_flat(i);
      }
      if (t.needs_grad(b)) {
        DenseMatrix db = DenseMatrix::matmul_tn(t.value(a), g);
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < db.size(); ++i)
          gb.at_flat(i) += db.at_flat(i);
      }
    };
  return self;
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  DenseMatrix out = DenseMatrix::matmul_nt(value(a), value(b));
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) {
        DenseMatrix da = DenseMatrix::matmul(g, t.value(b));
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < da.size(); ++i)
          ga.at_flat(i) += da.at_flat(i);
      }
      if (t.needs_grad(b)) {
        DenseMatrix db = DenseMatrix::matmul_tn(g, t.value(a));
        auto& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < db.size(); ++i)
          gb.at_flat(i) += db.at_flat(i);
      }
    };
  return self;
}

Tape::NodeId Tape::rows_dot(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (!va.same_shape(vb))
    throw ShapeError("rows_dot " + va.shape_str() + " vs " + vb.shape_str());
  DenseMatrix out(va.rows(), 1);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < va.cols(); ++c) s += va(r, c) * vb(r, c);
    out(r, 0) = s;
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& va = t.value(a);
      const auto& vb = t.value(b);
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t r = 0; r < va.rows(); ++r)
          for (std::size_t c = 0; c < va.cols(); ++c)
            ga(r, c) += g(r, 0) * vb(r, c);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t r = 0; r < va.rows(); ++r)
          for (std::size_t c = 0; c < va.cols(); ++c)
            gb(r, c) += g(r, 0) * va(r, c);
      }
    };
  return self;
}

Tape::NodeId Tape::gather_rows(NodeId x, std::vector<std::size_t> idx) {
  const auto& vx = value(x);
  DenseMatrix out(idx.size(), vx.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= vx.rows())
      throw ShapeError("gather_rows index " + std::to_string(idx[r]) +
                       " out of " + std::to_string(vx.rows()));
    for (std::size_t c = 0; c < vx.cols(); ++c) out(r, c) = vx(idx[r], c);
  }
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, idx = std::move(idx)](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(idx[r], c) += g(r, c);
    };
  return self;
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.rows() != vb.rows())
    throw ShapeError("concat_cols " + va.shape_str() + " | " + vb.shape_str());
  DenseMatrix out(va.rows(), va.cols() + vb.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    for (std::size_t c = 0; c < va.cols(); ++c) out(r, c) = va(r, c);
    for (std::size_t c = 0; c < vb.cols(); ++c) out(r, va.cols() + c) = vb(r, c);
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const std::size_t ca = t.value(a).cols();
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols() - ca; ++c)
            gb(r, c) += g(r, ca + c);
      }
    };
  return self;
}

Tape::NodeId Tape::concat_rows(NodeId a, NodeId b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.cols() != vb.cols())
    throw ShapeError("concat_rows " + va.shape_str() + " / " + vb.shape_str());
  DenseMatrix out(va.rows() + vb.rows(), va.cols());
  for (std::size_t r = 0; r < va.rows(); ++r)
    for (std::size_t c = 0; c < va.cols(); ++c) out(r, c) = va(r, c);
  for (std::size_t r = 0; r < vb.rows(); ++r)
    for (std::size_t c = 0; c < vb.cols(); ++c) out(va.rows() + r, c) = vb(r, c);
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, a, b](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const std::size_t ra = t.value(a).rows();
      if (t.needs_grad(a)) {
        auto& ga = t.grad_buf(a);
        for (std::size_t r = 0; r < ra; ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad_buf(b);
        for (std::size_t r = 0; r < g.rows() - ra; ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb(r, c) += g(ra + r, c);
      }
    };
  return self;
}

Tape::NodeId Tape::slice_rows(NodeId x, std::size_t start, std::size_t count) {
  const auto& vx = value(x);
  if (start + count > vx.rows())
    throw ShapeError("slice_rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(vx.rows()));
  DenseMatrix out(count, vx.cols());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < vx.cols(); ++c) out(r, c) = vx(start + r, c);
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, start](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(start + r, c) += g(r, c);
    };
  return self;
}

Tape::NodeId Tape::segment_sum(NodeId x, std::vector<std::size_t> seg,
                               std::size_t n_segs) {
  const auto& vx = value(x);
  if (vx.cols() != 1 || vx.rows() != seg.size())
    throw ShapeError("segment_sum expects (n x 1) input matching segment ids");
  DenseMatrix out(n_segs, 1);
  for (std::size_t i = 0; i < seg.size(); ++i) out(seg[i], 0) += vx(i, 0);
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, seg = std::move(seg)](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < seg.size(); ++i) gx(i, 0) += g(seg[i], 0);
    };
  return self;
}

Tape::NodeId Tape::scatter_to_base(NodeId x, std::vector<std::size_t> positions,
                                   DenseMatrix base) {
  const auto& vx = value(x);
  if (vx.cols() != 1 || base.cols() != 1 || vx.rows() != positions.size())
    throw ShapeError("scatter_to_base expects column vectors");
  DenseMatrix out = std::move(base);
  for (std::size_t i = 0; i < positions.size(); ++i)
    out(positions[i], 0) = vx(i, 0);
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, positions = std::move(positions)](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < positions.size(); ++i)
        gx(i, 0) += g(positions[i], 0);
    };
  return self;
}

Tape::NodeId Tape::spmm(std::shared_ptr<const CsrPattern> pattern,
                        NodeId weights, NodeId x) {
  const auto& w = value(weights);
  const auto& vx = value(x);
  if (w.cols() != 1 || w.rows() != pattern->nnz())
    throw ShapeError("spmm weights must be (nnz x 1)");
  if (vx.rows() != pattern->dim)
    throw ShapeError("spmm: pattern dim " + std::to_string(pattern->dim) +
                     " vs input rows " + std::to_string(vx.rows()));
  DenseMatrix out(pattern->dim, vx.cols());
  for (std::size_t i = 0; i < pattern->dim; ++i) {
    for (std::size_t e = pattern->row_offsets[i]; e < pattern->row_offsets[i + 1]; ++e) {
      const double we = w(e, 0);
      const std::size_t j = pattern->col_indices[e];
      for (std::size_t c = 0; c < vx.cols(); ++c) out(i, c) += we * vx(j, c);
    }
  }
  const bool ng = needs_grad(weights) || needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, weights, x, pattern = std::move(pattern)](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& w = t.value(weights);
      const auto& vx = t.value(x);
      if (t.needs_grad(weights)) {
        auto& gw = t.grad_buf(weights);
        for (std::size_t e = 0; e < pattern->nnz(); ++e) {
          const std::size_t i = pattern->nnz_row[e];
          const std::size_t j = pattern->col_indices[e];
          double s = 0.0;
          for (std::size_t c = 0; c < g.cols(); ++c) s += g(i, c) * vx(j, c);
          gw(e, 0) += s;
        }
      }
      if (t.needs_grad(x)) {
        auto& gx = t.grad_buf(x);
        for (std::size_t e = 0; e < pattern->nnz(); ++e) {
          const std::size_t i = pattern->nnz_row[e];
          const std::size_t j = pattern->col_indices[e];
          const double we = w(e, 0);
          for (std::size_t c = 0; c < g.cols(); ++c) gx(j, c) += we * g(i, c);
        }
      }
    };
  return self;
}

Tape::NodeId Tape::l2_normalize_rows(NodeId x, double eps) {
  const auto& vx = value(x);
  DenseMatrix out(vx.rows(), vx.cols());
  std::vector<double> norms(vx.rows());
  for (std::size_t r = 0; r < vx.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < vx.cols(); ++c) sq += vx(r, c) * vx(r, c);
    const double n = std::sqrt(sq);
    norms[r] = n;
    const double denom = n + eps;
    for (std::size_t c = 0; c < vx.cols(); ++c) out(r, c) = vx(r, c) / denom;
  }
  const bool ng = needs_grad(x);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x, eps, norms = std::move(norms)](Tape& t) {
      const auto& g = t.nodes_[self].grad;
      const auto& vx = t.value(x);
      auto& gx = t.grad_buf(x);
      for (std::size_t r = 0; r < vx.rows(); ++r) {
        const double n = norms[r];
        const double denom = n + eps;
        double gdotx = 0.0;
        for (std::size_t c = 0; c < vx.cols(); ++c) gdotx += g(r, c) * vx(r, c);
        for (std::size_t c = 0; c < vx.cols(); ++c) {
          double dv = g(r, c) / denom;
          if (n > 0.0) dv -= gdotx * vx(r, c) / (n * denom * denom);
          gx(r, c) += dv;
        }
      }
    };
  return self;
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId scores,
                                         std::vector<std::size_t> targets) {
  const auto& s = value(scores);
  if (targets.size() != s.rows())
    throw ShapeError("softmax_cross_entropy: one target per row required");
  const std::size_t rows = s.rows(), cols = s.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols)
      throw ShapeError("softmax_cross_entropy target out of range");
    double m = s(r, 0);
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, s(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(s(r, c) - m);
    total += m + std::log(z) - s(r, targets[r]);
  }
  DenseMatrix out = DenseMatrix::scalar(total / static_cast<double>(rows));
  const bool ng = needs_grad(scores);
  NodeId self = push(std::move(out), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, scores, targets = std::move(targets)](Tape& t) {
      const double go = t.nodes_[self].grad.at_flat(0);
      const auto& s = t.value(scores);
      auto& gs = t.grad_buf(scores);
      const std::size_t rows = s.rows(), cols = s.cols();
      const double inv_rows = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        double m = s(r, 0);
        for (std::size_t c = 1; c < cols; ++c) m = std::max(m, s(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(s(r, c) - m);
        for (std::size_t c = 0; c < cols; ++c) {
          double p = std::exp(s(r, c) - m) / z;
          if (c == targets[r]) p -= 1.0;
          gs(r, c) += go * p * inv_rows;
        }
      }
    };
  return self;
}

Tape::NodeId Tape::sum_all(NodeId x) {
  const auto& vx = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) s += vx.at_flat(i);
  const bool ng = needs_grad(x);
  NodeId self = push(DenseMatrix::scalar(s), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const double go = t.nodes_[self].grad.at_flat(0);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx.at_flat(i) += go;
    };
  return self;
}

Tape::NodeId Tape::mean_all(NodeId x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(value(x).size()));
}

Tape::NodeId Tape::sum_squares(NodeId x) {
  const auto& vx = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i)
    s += vx.at_flat(i) * vx.at_flat(i);
  const bool ng = needs_grad(x);
  NodeId self = push(DenseMatrix::scalar(s), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, x](Tape& t) {
      const double go = t.nodes_[self].grad.at_flat(0);
      const auto& vx = t.value(x);
      auto& gx = t.grad_buf(x);
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx.at_flat(i) += 2.0 * go * vx.at_flat(i);
    };
  return self;
}

Tape::NodeId Tape::mean_of(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw ShapeError("mean_of over empty list");
  // Shifted by the first element so identical inputs give the input back
  // exactly (and a zero variance downstream).
  const double x0 = value(xs[0]).as_scalar();
  double s = 0.0;
  bool ng = false;
  for (NodeId id : xs) {
    s += value(id).as_scalar() - x0;
    ng = ng || needs_grad(id);
  }
  const double k = static_cast<double>(xs.size());
  NodeId self = push(DenseMatrix::scalar(x0 + s / k), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, xs, k](Tape& t) {
      const double go = t.nodes_[self].grad.at_flat(0);
      for (NodeId id : xs)
        if (t.needs_grad(id)) t.grad_buf(id).at_flat(0) += go / k;
    };
  return self;
}

Tape::NodeId Tape::variance_of(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw ShapeError("variance_of over empty list");
  const double k = static_cast<double>(xs.size());
  const double x0 = value(xs[0]).as_scalar();
  double mean = 0.0;
  bool ng = false;
  for (NodeId id : xs) {
    mean += value(id).as_scalar() - x0;
    ng = ng || needs_grad(id);
  }
  mean = x0 + mean / k;
  double var = 0.0;
  for (NodeId id : xs) {
    const double d = value(id).as_scalar() - mean;
    var += d * d;
  }
  var /= k;
  NodeId self = push(DenseMatrix::scalar(var), ng, nullptr);
  if (ng)
    nodes_[self].backward = [self, xs, k, mean](Tape& t) {
      const double go = t.nodes_[self].grad.at_flat(0);
      for (NodeId id : xs)
        if (t.needs_grad(id))
          t.grad_buf(id).at_flat(0) +=
              go * 2.0 * (t.value(id).as_scalar() - mean) / k;
    };
  return self;
}

void Tape::backward(NodeId root) {
  const auto& rv = nodes_[root].value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw ShapeError("backward root must be scalar, got " + rv.shape_str());
  if (!nodes_[root].needs_grad)
    throw Error("backward root does not depend on any gradient leaf");
  for (NodeId i = 0; i <= root; ++i) {
    auto& n = nodes_[i];
    if (n.needs_grad) {
      n.grad = DenseMatrix(n.value.rows(), n.value.cols());
    }
  }
  nodes_[root].grad.at_flat(0) = 1.0;
  for (NodeId i = root; i >= 0; --i) {
    auto& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this);
  }
}

}  // namespace sgil
