#include "sgil/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "sgil/errors.hpp"
#include "sgil/rng.hpp"

namespace sgil {

namespace {

struct RawRecord {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  bool has_rating = false;
  long long rating = 0;
};

// Splits a line into whitespace-separated integer fields. Returns false for
// blank and comment lines.
bool parse_record(const std::string& line, const std::string& path,
                  std::size_t lineno, RawRecord& out) {
  std::size_t pos = 0;
  while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos])))
    ++pos;
  if (pos == line.size() || line[pos] == '#') return false;

  std::vector<std::uint64_t> fields;
  bool negative_seen = false;
  while (pos < line.size()) {
    while (pos < line.size() &&
           std::isspace(static_cast<unsigned char>(line[pos])))
      ++pos;
    if (pos == line.size()) break;
    if (line[pos] == '-') negative_seen = true;
    std::size_t start = pos;
    while (pos < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[pos])))
      ++pos;
    const std::string tok = line.substr(start, pos - start);
    try {
      std::size_t used = 0;
      if (negative_seen) throw std::invalid_argument("negative");
      const std::uint64_t v = std::stoull(tok, &used);
      if (used != tok.size()) throw std::invalid_argument("trailing");
      fields.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "expected nonnegative integer, got '" + tok + "'");
    }
  }
  if (fields.size() != 2 && fields.size() != 3)
    throw ParseError(path, lineno,
                     "expected 2 or 3 integer fields, got " +
                         std::to_string(fields.size()));
  out.a = fields[0];
  out.b = fields[1];
  out.has_rating = fields.size() == 3;
  if (out.has_rating) out.rating = static_cast<long long>(fields[2]);
  return true;
}

std::vector<RawRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    RawRecord rec;
    if (parse_record(line, path, lineno, rec)) records.push_back(rec);
  }
  return records;
}

std::size_t dense_index(const std::vector<std::uint64_t>& sorted_ids,
                        std::uint64_t raw) {
  return static_cast<std::size_t>(
      std::lower_bound(sorted_ids.begin(), sorted_ids.end(), raw) -
      sorted_ids.begin());
}

void sort_unique(std::vector<IdPair>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) { fnv_bytes(h, &v, 8); }

void write_pairs(const std::string& path, const std::vector<IdPair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& [a, b] : pairs) out << a << ' ' << b << '\n';
}

std::vector<IdPair> read_pairs(const std::string& path) {
  std::vector<IdPair> pairs;
  for (const RawRecord& r : read_records(path)) {
    if (r.has_rating) throw DataError(path + ": expected 2 fields per line");
    pairs.emplace_back(static_cast<std::size_t>(r.a),
                       static_cast<std::size_t>(r.b));
  }
  return pairs;
}

}  // namespace

void InteractionStore::rebuild_degrees() {
  user_degree.assign(num_users, 0);
  for (const auto& [u, i] : train) {
    (void)i;
    user_degree[u]++;
  }
}

LoadResult load_dataset(const std::string& interactions_path,
                        const std::string& social_path,
                        std::optional<double> rating_threshold,
                        bool symmetrize_social) {
  LoadResult out;

  std::vector<RawRecord> inter = read_records(interactions_path);
  if (inter.empty())
    throw DataError(interactions_path + ": empty dataset");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> kept;
  kept.reserve(inter.size());
  for (const RawRecord& r : inter) {
    if (rating_threshold && r.has_rating &&
        static_cast<double>(r.rating) < *rating_threshold) {
      out.dropped_by_threshold++;
      continue;
    }
    kept.emplace_back(r.a, r.b);
  }
  if (kept.empty())
    throw DataError(interactions_path +
                    ": empty dataset after rating threshold");

  std::vector<RawRecord> social_recs = read_records(social_path);
  if (social_recs.empty()) throw DataError(social_path + ": empty dataset");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> social_raw;
  social_raw.reserve(social_recs.size());
  for (const RawRecord& r : social_recs) {
    if (r.a == r.b) {
      out.social_self_loops++;
      continue;
    }
    social_raw.emplace_back(r.a, r.b);
    if (symmetrize_social) social_raw.emplace_back(r.b, r.a);
  }

  // Users: union of interaction users and social endpoints, by raw id.
  std::vector<std::uint64_t> user_ids;
  std::vector<std::uint64_t> item_ids;
  for (const auto& [u, i] : kept) {
    user_ids.push_back(u);
    item_ids.push_back(i);
  }
  for (const auto& [s, d] : social_raw) {
    user_ids.push_back(s);
    user_ids.push_back(d);
  }
  std::sort(user_ids.begin(), user_ids.end());
  user_ids.erase(std::unique(user_ids.begin(), user_ids.end()), user_ids.end());
  std::sort(item_ids.begin(), item_ids.end());
  item_ids.erase(std::unique(item_ids.begin(), item_ids.end()), item_ids.end());

  RawDataset& data = out.data;
  data.num_users = user_ids.size();
  data.num_items = item_ids.size();
  data.user_raw_ids = user_ids;
  data.item_raw_ids = item_ids;
  data.interactions.reserve(kept.size());
  for (const auto& [u, i] : kept)
    data.interactions.emplace_back(dense_index(user_ids, u),
                                   dense_index(item_ids, i));
  const std::size_t before = data.interactions.size();
  sort_unique(data.interactions);
  out.duplicate_interactions = before - data.interactions.size();

  SocialGraph& social = out.social;
  social.num_users = data.num_users;
  social.edges.reserve(social_raw.size());
  for (const auto& [s, d] : social_raw)
    social.edges.emplace_back(dense_index(user_ids, s),
                              dense_index(user_ids, d));
  const std::size_t before_s = social.edges.size();
  sort_unique(social.edges);
  out.duplicate_social_edges = before_s - social.edges.size();
  return out;
}

InteractionStore split(const RawDataset& raw, double train_frac,
                       double val_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0) || train_frac > 1.0)
    throw ConfigError("train_frac must be in (0, 1]");
  if (val_frac < 0.0 || val_frac >= 1.0)
    throw ConfigError("val_frac must be in [0, 1)");
  if (train_frac + val_frac > 1.0)
    throw ConfigError("train_frac + val_frac must be <= 1");

  const std::size_t n = raw.interactions.size();
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(n)));
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(val_frac * static_cast<double>(n)));
  if (n_train + n_val > n) n_train = n - n_val;

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng = Rng::derive(seed, "split", 0);
  rng.shuffle(perm);

  InteractionStore store;
  store.num_users = raw.num_users;
  store.num_items = raw.num_items;
  for (std::size_t i = 0; i < n; ++i) {
    const IdPair& p = raw.interactions[perm[i]];
    if (i < n_train)
      store.train.push_back(p);
    else if (i < n_train + n_val)
      store.validation.push_back(p);
    else
      store.test.push_back(p);
  }
  std::sort(store.train.begin(), store.train.end());
  std::sort(store.validation.begin(), store.validation.end());
  std::sort(store.test.begin(), store.test.end());
  store.rebuild_degrees();
  return store;
}

NoisyGraph inject_noise(const SocialGraph& graph, double ratio,
                        std::uint64_t seed) {
  if (ratio < 0.0) throw ConfigError("noise ratio must be >= 0");
  const std::size_t M = graph.num_users;
  const std::size_t count = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(graph.edges.size())));

  NoisyGraph out;
  out.graph.num_users = M;
  out.graph.edges = graph.edges;
  if (count == 0) return out;

  const std::size_t capacity = M * (M - 1) - graph.edges.size();
  if (count > capacity)
    throw DataError("cannot inject " + std::to_string(count) +
                    " edges; only " + std::to_string(capacity) +
                    " free slots");

  std::unordered_set<std::uint64_t> taken;
  taken.reserve(graph.edges.size() + count);
  for (const auto& [s, d] : graph.edges)
    taken.insert(static_cast<std::uint64_t>(s) * M + d);

  Rng rng = Rng::derive(seed, "inject_noise", 0);
  std::size_t added = 0;
  while (added < count) {
    const std::size_t s = static_cast<std::size_t>(rng.next_below(M));
    const std::size_t d = static_cast<std::size_t>(rng.next_below(M));
    if (s == d) continue;
    const std::uint64_t key = static_cast<std::uint64_t>(s) * M + d;
    if (!taken.insert(key).second) continue;
    out.injected.emplace_back(s, d);
    ++added;
  }
  std::sort(out.injected.begin(), out.injected.end());
  out.graph.edges.insert(out.graph.edges.end(), out.injected.begin(),
                         out.injected.end());
  std::sort(out.graph.edges.begin(), out.graph.edges.end());
  return out;
}

SparsityBuckets bucket_by_sparsity(const InteractionStore& store) {
  const std::size_t M = store.num_users;
  std::vector<std::size_t> order(M);
  for (std::size_t i = 0; i < M; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (store.user_degree[a] != store.user_degree[b])
      return store.user_degree[a] < store.user_degree[b];
    return a < b;
  });

  const std::size_t q = M / 3;
  const std::size_t r = M % 3;
  const std::size_t n_low = q + (r > 0 ? 1 : 0);
  const std::size_t n_med = q + (r > 1 ? 1 : 0);

  SparsityBuckets buckets;
  buckets.assignment.assign(M, Bucket::High);
  for (std::size_t i = 0; i < M; ++i) {
    if (i < n_low)
      buckets.assignment[order[i]] = Bucket::Low;
    else if (i < n_low + n_med)
      buckets.assignment[order[i]] = Bucket::Medium;
  }
  return buckets;
}

const char* bucket_name(Bucket b) {
  switch (b) {
    case Bucket::Low: return "Low";
    case Bucket::Medium: return "Medium";
    case Bucket::High: return "High";
  }
  return "?";
}

std::string dataset_fingerprint(const InteractionStore& store,
                                const SocialGraph& social) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_bytes(h, "SGILDS1", 7);
  fnv_u64(h, store.num_users);
  fnv_u64(h, store.num_items);
  for (const auto* part : {&store.train, &store.validation, &store.test}) {
    fnv_u64(h, part->size());
    for (const auto& [a, b] : *part) {
      fnv_u64(h, a);
      fnv_u64(h, b);
    }
  }
  fnv_u64(h, social.edges.size());
  for (const auto& [s, d] : social.edges) {
    fnv_u64(h, s);
    fnv_u64(h, d);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

void save_snapshot(const std::string& dir, const InteractionStore& store,
                   const SocialGraph& social, const RawDataset& raw,
                   const SnapshotMeta& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_pairs(dir + "/train.txt", store.train);
  write_pairs(dir + "/validation.txt", store.validation);
  write_pairs(dir + "/test.txt", store.test);
  write_pairs(dir + "/social.txt", social.edges);
  {
    std::ofstream u(dir + "/users.txt", std::ios::trunc);
    std::ofstream i(dir + "/items.txt", std::ios::trunc);
    if (!u || !i) throw DataError("cannot write id maps under " + dir);
    for (std::uint64_t id : raw.user_raw_ids) u << id << '\n';
    for (std::uint64_t id : raw.item_raw_ids) i << id << '\n';
  }

  nlohmann::json manifest;
  manifest["num_users"] = store.num_users;
  manifest["num_items"] = store.num_items;
  manifest["n_train"] = store.train.size();
  manifest["n_validation"] = store.validation.size();
  manifest["n_test"] = store.test.size();
  manifest["n_social_edges"] = social.edges.size();
  manifest["seed"] = meta.seed;
  if (meta.rating_threshold)
    manifest["rating_threshold"] = *meta.rating_threshold;
  else
    manifest["rating_threshold"] = nullptr;
  manifest["train_frac"] = meta.train_frac;
  manifest["val_frac"] = meta.val_frac;
  manifest["symmetrized_social"] = meta.symmetrized;
  manifest["split_mode"] = "global";
  manifest["fingerprint"] = dataset_fingerprint(store, social);
  manifest["files"] = {"train.txt", "validation.txt", "test.txt",
                       "social.txt", "users.txt",      "items.txt"};
  std::ofstream m(dir + "/manifest.json", std::ios::trunc);
  if (!m) throw DataError("cannot write " + dir + "/manifest.json");
  m << manifest.dump(2) << '\n';
}

Snapshot load_snapshot(const std::string& dir) {
  std::ifstream m(dir + "/manifest.json");
  if (!m) throw DataError("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    m >> manifest;
  } catch (const std::exception& e) {
    throw DataError(dir + "/manifest.json: " + e.what());
  }

  Snapshot snap;
  snap.store.num_users = manifest.at("num_users").get<std::size_t>();
  snap.store.num_items = manifest.at("num_items").get<std::size_t>();
  snap.store.train = read_pairs(dir + "/train.txt");
  snap.store.validation = read_pairs(dir + "/validation.txt");
  snap.store.test = read_pairs(dir + "/test.txt");
  snap.store.rebuild_degrees();
  snap.social.num_users = snap.store.num_users;
  snap.social.edges = read_pairs(dir + "/social.txt");

  for (const auto* part :
       {&snap.store.train, &snap.store.validation, &snap.store.test}) {
    for (const auto& [u, i] : *part)
      if (u >= snap.store.num_users || i >= snap.store.num_items)
        throw DataError(dir + ": interaction id outside manifest counts");
  }
  for (const auto& [s, d] : snap.social.edges)
    if (s >= snap.store.num_users || d >= snap.store.num_users)
      throw DataError(dir + ": social edge id outside manifest counts");
  return snap;
}

}  // namespace sgil
