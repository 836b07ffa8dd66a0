#include "sgil/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "sgil/errors.hpp"

namespace sgil {

Batch Batch::from_pairs(std::vector<IdPair> pairs) {
  Batch b;
  b.pairs = std::move(pairs);
  b.candidate_items.reserve(b.pairs.size());
  for (const auto& [u, i] : b.pairs) {
    (void)u;
    b.candidate_items.push_back(i);
  }
  std::sort(b.candidate_items.begin(), b.candidate_items.end());
  b.candidate_items.erase(
      std::unique(b.candidate_items.begin(), b.candidate_items.end()),
      b.candidate_items.end());
  b.targets.reserve(b.pairs.size());
  for (const auto& [u, i] : b.pairs) {
    (void)u;
    b.targets.push_back(static_cast<std::size_t>(
        std::lower_bound(b.candidate_items.begin(), b.candidate_items.end(),
                         i) -
        b.candidate_items.begin()));
  }
  return b;
}

Tape::NodeId erm_softmax_loss_tape(Tape& t, Tape::NodeId P, Tape::NodeId Q,
                                   const Batch& batch, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softmax temperature must be > 0");
  if (batch.pairs.empty()) throw ShapeError("empty batch");
  std::vector<std::size_t> users(batch.pairs.size());
  for (std::size_t i = 0; i < batch.pairs.size(); ++i)
    users[i] = batch.pairs[i].first;
  Tape::NodeId pu = t.l2_normalize_rows(t.gather_rows(P, std::move(users)));
  Tape::NodeId qi = t.l2_normalize_rows(t.gather_rows(Q, batch.candidate_items));
  Tape::NodeId scores = t.scale(t.matmul_nt(pu, qi), 1.0 / tau);
  return t.softmax_cross_entropy(scores, batch.targets);
}

double erm_softmax_loss(const DenseMatrix& P, const DenseMatrix& Q,
                        const Batch& batch, double tau) {
  Tape t;
  Tape::NodeId p = t.constant(P);
  Tape::NodeId q = t.constant(Q);
  return t.value(erm_softmax_loss_tape(t, p, q, batch, tau)).as_scalar();
}

double bpr_loss(const DenseMatrix& P, const DenseMatrix& Q,
                const std::vector<std::array<std::size_t, 3>>& triples,
                double lambda, const DenseMatrix& P0, const DenseMatrix& Q0) {
  double loss = 0.0;
  for (const auto& [a, i, j] : triples) {
    double gap = 0.0;
    for (std::size_t c = 0; c < P.cols(); ++c)
      gap += P(a, c) * (Q(i, c) - Q(j, c));
    // -log sigmoid(gap) = softplus(-gap)
    loss += std::max(-gap, 0.0) + std::log1p(std::exp(-std::abs(gap)));
  }
  double reg = 0.0;
  for (std::size_t i = 0; i < P0.size(); ++i) reg += P0.at_flat(i) * P0.at_flat(i);
  for (std::size_t i = 0; i < Q0.size(); ++i) reg += Q0.at_flat(i) * Q0.at_flat(i);
  return loss + lambda * reg;
}

LossBreakdown invariance_objective(const std::vector<double>& per_env_losses,
                                   double beta) {
  if (per_env_losses.empty()) throw ShapeError("need at least one environment");
  LossBreakdown out;
  out.per_env = per_env_losses;
  const double k = static_cast<double>(per_env_losses.size());
  // Shifted by the first loss so identical losses give an exactly zero
  // variance; mirrors the tape reductions bit for bit.
  const double l0 = per_env_losses[0];
  double sum = 0.0;
  for (double l : per_env_losses) sum += l - l0;
  out.mean = l0 + sum / k;
  double var = 0.0;
  for (double l : per_env_losses) var += (l - out.mean) * (l - out.mean);
  out.variance = var / k;
  out.total = out.mean + beta * out.variance;
  return out;
}

namespace {

// RBF kernel matrix on rows of X.
DenseMatrix rbf_kernel(const DenseMatrix& X, double sigma) {
  const std::size_t n = X.rows();
  DenseMatrix k(n, n);
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < X.cols(); ++c) {
        const double d = X(i, c) - X(j, c);
        sq += d * d;
      }
      k(i, j) = std::exp(-sq / denom);
    }
  return k;
}

// HKH computed as K_ij - rowmean_i - colmean_j + grandmean; exact zero for
// a constant kernel.
DenseMatrix double_center(const DenseMatrix& k) {
  const std::size_t n = k.rows();
  std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row_mean[i] += k(i, j);
      col_mean[j] += k(i, j);
      grand += k(i, j);
    }
  for (double& v : row_mean) v /= static_cast<double>(n);
  for (double& v : col_mean) v /= static_cast<double>(n);
  grand /= static_cast<double>(n * n);
  DenseMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = k(i, j) - row_mean[i] - col_mean[j] + grand;
  return out;
}

}  // namespace

double hsic_rbf(const DenseMatrix& X, const DenseMatrix& Y, double sigma_rbf) {
  if (X.rows() != Y.rows()) throw ShapeError("HSIC sample counts differ");
  if (X.rows() < 2) throw ConfigError("HSIC needs at least 2 samples");
  if (!(sigma_rbf > 0.0)) throw ConfigError("RBF bandwidth must be > 0");
  const std::size_t n = X.rows();
  DenseMatrix kx = double_center(rbf_kernel(X, sigma_rbf));
  DenseMatrix ky = rbf_kernel(Y, sigma_rbf);
  // Tr(Kx H Ky H) = sum_ij (H Kx H)_ij (Ky)_ij for symmetric kernels
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) tr += kx(i, j) * ky(i, j);
  const double scale = static_cast<double>(n - 1);
  return tr / (scale * scale);
}

SocialGraph rule_based_filter(const SocialGraph& social,
                              const InteractionStore& store,
                              double threshold) {
  std::vector<std::vector<std::size_t>> items(store.num_users);
  for (const auto& [u, i] : store.train) items[u].push_back(i);
  for (auto& v : items) std::sort(v.begin(), v.end());

  SocialGraph out;
  out.num_users = social.num_users;
  for (const auto& edge : social.edges) {
    const auto& a = items[edge.first];
    const auto& b = items[edge.second];
    std::size_t inter = 0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
      if (a[ia] == b[ib]) {
        ++inter;
        ++ia;
        ++ib;
      } else if (a[ia] < b[ib]) {
        ++ia;
      } else {
        ++ib;
      }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    const double sim =
        uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (sim >= threshold) out.edges.push_back(edge);
  }
  return out;
}

double density_ratio(double f, double C) {
  const double s = f >= 0.0 ? 1.0 / (1.0 + std::exp(-f))
                            : std::exp(f) / (1.0 + std::exp(f));
  return C * s / (1.0 - s);
}

}  // namespace sgil
