#pragma once

#include <string>
#include <vector>

#include "sgil/dataset.hpp"
#include "sgil/dense.hpp"

namespace sgil {

struct MetricPair {
  double recall = 0.0;
  double ndcg = 0.0;
};

// Per-user metrics for one score vector. Train items are removed from the
// candidate list; ties in score break by ascending item id. Returns one
// MetricPair per cutoff.
std::vector<MetricPair> rank_and_score(const std::vector<double>& scores,
                                       const std::vector<std::size_t>& train_items,
                                       const std::vector<std::size_t>& test_items,
                                       const std::vector<std::size_t>& cutoffs);

struct EvalReport {
  std::vector<std::size_t> cutoffs;
  std::vector<double> recall;  // aligned with cutoffs
  std::vector<double> ndcg;
  std::size_t evaluated_users = 0;

  struct BucketRow {
    std::string name;
    std::size_t users = 0;
    std::vector<double> recall;
    std::vector<double> ndcg;
  };
  std::vector<BucketRow> buckets;
};

// Macro-averages rank_and_score over every user with a nonempty test set.
// score(a, i) = <U[a], V[i]>. buckets is optional; threads shards users.
EvalReport evaluate(const DenseMatrix& U, const DenseMatrix& V,
                    const InteractionStore& store,
                    const SparsityBuckets* buckets,
                    const std::vector<std::size_t>& cutoffs,
                    std::size_t threads = 1);

std::string report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);

}  // namespace sgil
