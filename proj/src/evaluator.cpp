#include "sgil/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sgil/errors.hpp"

namespace sgil {

std::vector<MetricPair> rank_and_score(
    const std::vector<double>& scores,
    const std::vector<std::size_t>& train_items,
    const std::vector<std::size_t>& test_items,
    const std::vector<std::size_t>& cutoffs) {
  if (test_items.empty()) throw ShapeError("rank_and_score on empty test set");
  const std::size_t n_items = scores.size();

  std::vector<char> masked(n_items, 0);
  for (std::size_t i : train_items) masked[i] = 1;

  std::vector<std::size_t> candidates;
  candidates.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i)
    if (!masked[i]) candidates.push_back(i);

  std::size_t max_n = 0;
  for (std::size_t n : cutoffs) max_n = std::max(max_n, n);
  const std::size_t top = std::min(max_n, candidates.size());

  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + top,
                    candidates.end(), better);

  std::vector<char> is_test(n_items, 0);
  for (std::size_t i : test_items) is_test[i] = 1;

  std::vector<MetricPair> out(cutoffs.size());
  for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
    const std::size_t n = std::min(cutoffs[ci], top);
    std::size_t hits = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (is_test[candidates[r]]) {
        ++hits;
        dcg += 1.0 / std::log2(static_cast<double>(r + 2));
      }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(cutoffs[ci], test_items.size());
    for (std::size_t r = 0; r < ideal; ++r)
      idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    out[ci].recall =
        static_cast<double>(hits) / static_cast<double>(test_items.size());
    out[ci].ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
  }
  return out;
}

EvalReport evaluate(const DenseMatrix& U, const DenseMatrix& V,
                    const InteractionStore& store,
                    const SparsityBuckets* buckets,
                    const std::vector<std::size_t>& cutoffs,
                    std::size_t threads) {
  if (U.rows() != store.num_users || V.rows() != store.num_items)
    throw ShapeError("embedding tables do not match dataset counts");

  std::vector<std::vector<std::size_t>> train_items(store.num_users);
  std::vector<std::vector<std::size_t>> test_items(store.num_users);
  for (const auto& [u, i] : store.train) train_items[u].push_back(i);
  for (const auto& [u, i] : store.test) test_items[u].push_back(i);

  std::vector<std::size_t> users;
  for (std::size_t u = 0; u < store.num_users; ++u)
    if (!test_items[u].empty()) users.push_back(u);

  // Per-user results land in preassigned slots, so the reduction does not
  // depend on the number of worker threads.
  std::vector<std::vector<MetricPair>> per_user(users.size());
  const auto worker = [&](std::size_t begin, std::size_t end) {
    const std::size_t d = U.cols();
    std::vector<double> scores(store.num_items);
    for (std::size_t w = begin; w < end; ++w) {
      const std::size_t u = users[w];
      for (std::size_t i = 0; i < store.num_items; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += U(u, c) * V(i, c);
        scores[i] = s;
      }
      per_user[w] = rank_and_score(scores, train_items[u], test_items[u],
                                   cutoffs);
    }
  };

  if (threads <= 1 || users.size() < 2) {
    worker(0, users.size());
  } else {
    const std::size_t n_threads = std::min(threads, users.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(begin + chunk, users.size());
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  report.cutoffs = cutoffs;
  report.recall.assign(cutoffs.size(), 0.0);
  report.ndcg.assign(cutoffs.size(), 0.0);
  report.evaluated_users = users.size();
  for (const auto& m : per_user)
    for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
      report.recall[ci] += m[ci].recall;
      report.ndcg[ci] += m[ci].ndcg;
    }
  if (!users.empty())
    for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
      report.recall[ci] /= static_cast<double>(users.size());
      report.ndcg[ci] /= static_cast<double>(users.size());
    }

  if (buckets) {
    for (Bucket b : {Bucket::Low, Bucket::Medium, Bucket::High}) {
      EvalReport::BucketRow row;
      row.name = bucket_name(b);
      row.recall.assign(cutoffs.size(), 0.0);
      row.ndcg.assign(cutoffs.size(), 0.0);
      for (std::size_t w = 0; w < users.size(); ++w) {
        if (buckets->assignment[users[w]] != b) continue;
        ++row.users;
        for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
          row.recall[ci] += per_user[w][ci].recall;
          row.ndcg[ci] += per_user[w][ci].ndcg;
        }
      }
      if (row.users > 0)
        for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
          row.recall[ci] /= static_cast<double>(row.users);
          row.ndcg[ci] /= static_cast<double>(row.users);
        }
      report.buckets.push_back(std::move(row));
    }
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["evaluated_users"] = report.evaluated_users;
  for (std::size_t ci = 0; ci < report.cutoffs.size(); ++ci) {
    const std::string n = std::to_string(report.cutoffs[ci]);
    j["recall"][n] = report.recall[ci];
    j["ndcg"][n] = report.ndcg[ci];
  }
  for (const auto& row : report.buckets) {
    nlohmann::json b;
    b["users"] = row.users;
    for (std::size_t ci = 0; ci < report.cutoffs.size(); ++ci) {
      const std::string n = std::to_string(report.cutoffs[ci]);
      b["recall"][n] = row.recall[ci];
      b["ndcg"][n] = row.ndcg[ci];
    }
    j["buckets"][row.name] = b;
  }
  return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream out;
  char buf[64];
  out << "users evaluated: " << report.evaluated_users << "\n";
  out << "metric      ";
  for (std::size_t n : report.cutoffs) {
    std::snprintf(buf, sizeof(buf), "@%-10zu", n);
    out << buf;
  }
  out << "\n";
  const auto metric_row = [&](const char* name, const std::vector<double>& v) {
    std::snprintf(buf, sizeof(buf), "%-12s", name);
    out << buf;
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), "%-11.6f", x);
      out << buf;
    }
    out << "\n";
  };
  metric_row("recall", report.recall);
  metric_row("ndcg", report.ndcg);
  for (const auto& row : report.buckets) {
    out << "[" << row.name << "] users: " << row.users << "\n";
    metric_row("  recall", row.recall);
    metric_row("  ndcg", row.ndcg);
  }
  return out.str();
}

}  // namespace sgil
