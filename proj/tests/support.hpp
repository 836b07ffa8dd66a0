#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sgil/dataset.hpp"
#include "sgil/dense.hpp"
#include "sgil/rng.hpp"
#include "sgil/tape.hpp"

namespace sgil::test {

// Central-difference check of d(root)/d(leaves). The builder receives the
// leaf nodes in order and must return a scalar root. Returns the worst
// relative error (with a small absolute floor for near-zero coordinates).
struct GradCheckResult {
  double worst_rel = 0.0;
  std::string worst_at;
};

inline GradCheckResult check_gradients(
    const std::vector<DenseMatrix>& leaves,
    const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>&
        build,
    double h = 1e-3) {
  auto eval = [&](const std::vector<DenseMatrix>& values) {
    Tape t;
    std::vector<Tape::NodeId> ids;
    ids.reserve(values.size());
    for (const DenseMatrix& v : values) ids.push_back(t.leaf(v, "leaf"));
    Tape::NodeId root = build(t, ids);
    return t.value(root).as_scalar();
  };

  Tape t;
  std::vector<Tape::NodeId> ids;
  for (const DenseMatrix& v : leaves) ids.push_back(t.leaf(v, "leaf"));
  Tape::NodeId root = build(t, ids);
  t.backward(root);

  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const DenseMatrix& g = t.grad(ids[li]);
    for (std::size_t j = 0; j < leaves[li].size(); ++j) {
      std::vector<DenseMatrix> plus = leaves;
      std::vector<DenseMatrix> minus = leaves;
      plus[li].at_flat(j) += h;
      minus[li].at_flat(j) -= h;
      const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
      const double a = g.at_flat(j);
      const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-10});
      double rel = std::fabs(a - fd) / denom;
      if (std::fabs(a - fd) < 1e-9) rel = 0.0;
      if (rel > result.worst_rel) {
        result.worst_rel = rel;
        result.worst_at = "leaf " + std::to_string(li) + " coord " +
                          std::to_string(j);
      }
    }
  }
  return result;
}

// Random small dataset: every user gets at least one train interaction and
// the social graph is symmetric without self-loops.
struct SmallData {
  InteractionStore store;
  SocialGraph social;
};

inline SmallData make_small_data(std::size_t M, std::size_t N,
                                 std::size_t social_pairs,
                                 std::size_t per_user,
                                 std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "small_data", 0);
  std::set<IdPair> inter;
  for (std::size_t u = 0; u < M; ++u) {
    for (std::size_t c = 0; c < per_user; ++c)
      inter.insert({u, rng.next_below(N)});
  }
  SmallData d;
  d.store.num_users = M;
  d.store.num_items = N;
  d.store.train.assign(inter.begin(), inter.end());
  d.store.rebuild_degrees();
  d.social.num_users = M;
  std::set<IdPair> edges;
  while (edges.size() < 2 * social_pairs) {
    std::size_t a = rng.next_below(M);
    std::size_t b = rng.next_below(M);
    if (a == b) continue;
    edges.insert({a, b});
    edges.insert({b, a});
  }
  d.social.edges.assign(edges.begin(), edges.end());
  return d;
}

// Two 100-user communities with community-aligned item preferences,
// within-community social edges, and targeted cross-community fakes at the
// given ratio of the clean edge count. Preferences are homophilous: each
// user draws interactions from their own anchor items and their friends'
// anchors, so real social edges carry ranking signal that the sparse
// bipartite graph alone cannot recover, and cross-community fakes actively
// mislead propagation.
struct PlantedData {
  InteractionStore store;
  SocialGraph social;        // clean + injected, canonical order
  std::size_t clean_edges = 0;
  std::size_t injected_edges = 0;
};

inline PlantedData make_planted(std::uint64_t seed, double noise_ratio = 1.0) {
  const std::size_t community = 100;
  const std::size_t M = 2 * community;
  const std::size_t items_per_community = 100;
  const std::size_t N = 2 * items_per_community;
  const std::size_t anchors_per_user = 4;
  const std::size_t inter_per_user = 6;
  const std::size_t friends_per_user = 5;
  const double own_frac = 0.4;

  Rng rng = Rng::derive(seed, "planted", 0);
  std::vector<std::vector<std::size_t>> friends(M);
  std::set<IdPair> edges;
  for (std::size_t u = 0; u < M; ++u) {
    const std::size_t lo = (u < community) ? 0 : community;
    std::size_t added = 0;
    while (added < friends_per_user) {
      std::size_t v = lo + rng.next_below(community);
      if (v == u) continue;
      if (edges.insert({u, v}).second) {
        ++added;
        friends[u].push_back(v);
      }
      if (edges.insert({v, u}).second) friends[v].push_back(u);
    }
  }

  std::vector<std::vector<std::size_t>> anchors(M);
  for (std::size_t u = 0; u < M; ++u) {
    const std::size_t base = (u < community) ? 0 : items_per_community;
    std::set<std::size_t> a;
    while (a.size() < anchors_per_user)
      a.insert(base + rng.next_below(items_per_community));
    anchors[u].assign(a.begin(), a.end());
  }

  RawDataset raw;
  raw.num_users = M;
  raw.num_items = N;
  std::set<IdPair> inter;
  for (std::size_t u = 0; u < M; ++u) {
    std::set<std::size_t> own;
    std::size_t guard = 0;
    while (own.size() < inter_per_user && guard < 10000) {
      ++guard;
      const bool from_own = rng.next_double() < own_frac || friends[u].empty();
      const std::vector<std::size_t>& pool =
          from_own ? anchors[u]
                   : anchors[friends[u][rng.next_below(friends[u].size())]];
      own.insert(pool[rng.next_below(pool.size())]);
    }
    for (std::size_t i : own) inter.insert({u, i});
  }
  raw.interactions.assign(inter.begin(), inter.end());
  for (std::size_t u = 0; u < M; ++u) raw.user_raw_ids.push_back(u);
  for (std::size_t i = 0; i < N; ++i) raw.item_raw_ids.push_back(i);

  PlantedData d;
  d.store = split(raw, 0.8, 0.0, seed);
  d.clean_edges = edges.size();

  const std::size_t n_fake = static_cast<std::size_t>(
      std::llround(noise_ratio * static_cast<double>(d.clean_edges)));
  std::size_t added = 0;
  while (added < n_fake) {
    std::size_t a = rng.next_below(community);
    std::size_t b = community + rng.next_below(community);
    IdPair e = rng.next_below(2) ? IdPair{a, b} : IdPair{b, a};
    if (edges.insert(e).second) ++added;
  }
  d.injected_edges = n_fake;
  d.social.num_users = M;
  d.social.edges.assign(edges.begin(), edges.end());
  return d;
}

}  // namespace sgil::test
