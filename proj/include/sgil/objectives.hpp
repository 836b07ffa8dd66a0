#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sgil/dataset.hpp"
#include "sgil/dense.hpp"
#include "sgil/tape.hpp"

namespace sgil {

// One training batch: positive (user, item) pairs plus the in-batch
// candidate set (unique items of the batch, ascending).
struct Batch {
  std::vector<IdPair> pairs;
  std::vector<std::size_t> candidate_items;
  std::vector<std::size_t> targets;  // index into candidate_items per pair

  static Batch from_pairs(std::vector<IdPair> pairs);
};

struct LossBreakdown {
  std::vector<double> per_env;
  double mean = 0.0;
  double variance = 0.0;  // population variance, / K
  double total = 0.0;     // mean + beta * variance
};

// In-batch softmax loss over scaled cosine scores:
// -(1/B) sum log softmax(cos(p_a, q_i), over j in candidates) with cos/tau.
Tape::NodeId erm_softmax_loss_tape(Tape& t, Tape::NodeId P, Tape::NodeId Q,
                                   const Batch& batch, double tau);
double erm_softmax_loss(const DenseMatrix& P, const DenseMatrix& Q,
                        const Batch& batch, double tau);

// -sum log sigmoid(<p_a,q_i> - <p_a,q_j>) + lambda (|P0|^2 + |Q0|^2).
double bpr_loss(const DenseMatrix& P, const DenseMatrix& Q,
                const std::vector<std::array<std::size_t, 3>>& triples,
                double lambda, const DenseMatrix& P0, const DenseMatrix& Q0);

LossBreakdown invariance_objective(const std::vector<double>& per_env_losses,
                                   double beta);

// Empirical HSIC with RBF kernels exp(-|x-y|^2 / (2 sigma^2)) and double
// centering; (n-1)^-2 Tr(Kx H Ky H).
double hsic_rbf(const DenseMatrix& X, const DenseMatrix& Y, double sigma_rbf);

// Keeps social edges whose endpoint users have Jaccard similarity of train
// item sets >= threshold. Empty-set pairs score 0.
SocialGraph rule_based_filter(const SocialGraph& social,
                              const InteractionStore& store, double threshold);

// C * sigma(f) / (1 - sigma(f)); equals C * exp(f) for log-odds scores.
double density_ratio(double f, double C);

}  // namespace sgil
