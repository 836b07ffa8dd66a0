#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sgil {

using IdPair = std::pair<std::size_t, std::size_t>;

// Unsplit interactions with dense 0-based IDs plus the raw-ID maps.
struct RawDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<IdPair> interactions;        // deduped, (user, item) ascending
  std::vector<std::uint64_t> user_raw_ids;  // dense index -> raw id
  std::vector<std::uint64_t> item_raw_ids;
};

// Directed user-user edges in canonical (src, dst) lexicographic order.
// Generators and samplers index edges by this order.
struct SocialGraph {
  std::size_t num_users = 0;
  std::vector<IdPair> edges;
};

struct InteractionStore {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<IdPair> train;
  std::vector<IdPair> validation;
  std::vector<IdPair> test;
  std::vector<std::size_t> user_degree;  // train interactions per user

  void rebuild_degrees();
};

enum class Bucket { Low, Medium, High };

struct SparsityBuckets {
  std::vector<Bucket> assignment;  // indexed by user id
};

struct LoadResult {
  RawDataset data;
  SocialGraph social;
  std::size_t dropped_by_threshold = 0;
  std::size_t duplicate_interactions = 0;
  std::size_t social_self_loops = 0;
  std::size_t duplicate_social_edges = 0;
};

// Line-oriented whitespace-separated integer records; '#' lines ignored.
// Interactions are (user, item) or (user, item, rating); ratings below the
// threshold are dropped when a threshold is given. IDs are densely
// re-indexed from 0 (users: union of interaction and social endpoints,
// sorted by raw id; items likewise from interactions).
LoadResult load_dataset(const std::string& interactions_path,
                        const std::string& social_path,
                        std::optional<double> rating_threshold = std::nullopt,
                        bool symmetrize_social = false);

// Global random permutation split. n_train = round(train_frac * n) and
// n_val = round(val_frac * n); the remainder is test. Each split is stored
// in ascending (user, item) order.
InteractionStore split(const RawDataset& raw, double train_frac,
                       double val_frac, std::uint64_t seed);

struct NoisyGraph {
  SocialGraph graph;
  std::vector<IdPair> injected;  // audit sidecar, canonical order
};

// Adds round(ratio * |edges|) uniform fake directed edges over the
// non-existing, non-self pairs. Original edges are always retained.
NoisyGraph inject_noise(const SocialGraph& graph, double ratio,
                        std::uint64_t seed);

// Terciles by (train degree ascending, user id ascending). When M is not
// divisible by 3 the extra users go to Low first, then Medium.
SparsityBuckets bucket_by_sparsity(const InteractionStore& store);

const char* bucket_name(Bucket b);

// FNV-1a over a canonical byte serialization of the splits and edges.
std::string dataset_fingerprint(const InteractionStore& store,
                                const SocialGraph& social);

struct SnapshotMeta {
  std::uint64_t seed = 0;
  std::optional<double> rating_threshold;
  double train_frac = 0.8;
  double val_frac = 0.0;
  bool symmetrized = false;
};

void save_snapshot(const std::string& dir, const InteractionStore& store,
                   const SocialGraph& social, const RawDataset& raw,
                   const SnapshotMeta& meta);

struct Snapshot {
  InteractionStore store;
  SocialGraph social;
};

Snapshot load_snapshot(const std::string& dir);

}  // namespace sgil
