#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "sgil/dataset.hpp"
#include "sgil/errors.hpp"

using namespace sgil;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("sgil_ds_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string write_file(const std::string& dir, const std::string& name,
                       const std::string& body) {
  std::string path = dir + "/" + name;
  std::ofstream out(path, std::ios::trunc);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("load_dataset reindexes raw ids densely and sorted") {
  std::string dir = temp_dir("load");
  std::string inter = write_file(dir, "inter.txt",
                                 "100 7\n"
                                 "5 9\n"
                                 "# comment line\n"
                                 "42 7\n"
                                 "5 9\n");
  std::string social = write_file(dir, "social.txt", "100 5\n42 100\n");
  LoadResult r = load_dataset(inter, social);
  CHECK(r.data.num_users == 3);
  CHECK(r.data.num_items == 2);
  CHECK(r.data.user_raw_ids == std::vector<std::uint64_t>{5, 42, 100});
  CHECK(r.data.item_raw_ids == std::vector<std::uint64_t>{7, 9});
  CHECK(r.duplicate_interactions == 1);
  CHECK(r.data.interactions ==
        std::vector<IdPair>{{0, 1}, {1, 0}, {2, 0}});
  CHECK(r.social.edges == std::vector<IdPair>{{1, 2}, {2, 0}});
}

TEST_CASE("rating threshold keeps records at or above it") {
  std::string dir = temp_dir("thresh");
  std::string inter = write_file(dir, "inter.txt",
                                 "0 0 1\n0 1 2\n0 2 3\n0 3 4\n0 4 5\n");
  std::string social = write_file(dir, "social.txt", "0 1\n1 0\n");
  LoadResult r = load_dataset(inter, social, 3.0);
  CHECK(r.data.interactions.size() == 3);
  CHECK(r.dropped_by_threshold == 2);
  for (const auto& [u, i] : r.data.interactions) CHECK(u == 0);
}

TEST_CASE("social self-loops are dropped and symmetrize adds reverses") {
  std::string dir = temp_dir("soc");
  std::string inter = write_file(dir, "inter.txt", "0 0\n1 0\n2 0\n");
  std::string social = write_file(dir, "social.txt", "0 1\n1 1\n2 0\n");
  LoadResult plain = load_dataset(inter, social);
  CHECK(plain.social_self_loops == 1);
  CHECK(plain.social.edges == std::vector<IdPair>{{0, 1}, {2, 0}});
  LoadResult sym = load_dataset(inter, social, std::nullopt, true);
  CHECK(sym.social.edges ==
        std::vector<IdPair>{{0, 1}, {0, 2}, {1, 0}, {2, 0}});
}

TEST_CASE("malformed and missing inputs are diagnosed") {
  std::string dir = temp_dir("bad");
  std::string social = write_file(dir, "social.txt", "0 1\n");
  std::string bad = write_file(dir, "bad.txt", "0 0\nx 1\n");
  CHECK_THROWS_AS(load_dataset(bad, social), ParseError);
  try {
    load_dataset(bad, social);
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("bad.txt") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
  std::string onefield = write_file(dir, "one.txt", "7\n");
  CHECK_THROWS_AS(load_dataset(onefield, social), ParseError);
  CHECK_THROWS_AS(load_dataset(dir + "/absent.txt", social), DataError);
  std::string empty = write_file(dir, "empty.txt", "");
  std::string inter = write_file(dir, "inter.txt", "0 0\n1 1\n");
  CHECK_THROWS_AS(load_dataset(empty, social), DataError);
  CHECK_THROWS_AS(load_dataset(inter, empty), DataError);
}

TEST_CASE("split fractions follow independent rounding") {
  RawDataset raw;
  raw.num_users = 10;
  raw.num_items = 10;
  for (std::size_t u = 0; u < 10; ++u) raw.interactions.push_back({u, u});
  raw.user_raw_ids.resize(10);
  raw.item_raw_ids.resize(10);

  InteractionStore s1 = split(raw, 0.8, 0.0, 3);
  CHECK(s1.train.size() == 8);
  CHECK(s1.validation.size() == 0);
  CHECK(s1.test.size() == 2);

  InteractionStore s2 = split(raw, 0.8, 0.1, 3);
  CHECK(s2.train.size() == 8);
  CHECK(s2.validation.size() == 1);
  CHECK(s2.test.size() == 1);

  std::set<IdPair> all;
  for (const auto* part : {&s2.train, &s2.validation, &s2.test})
    for (const auto& p : *part) CHECK(all.insert(p).second);
  CHECK(all.size() == raw.interactions.size());
  CHECK(std::is_sorted(s2.train.begin(), s2.train.end()));

  CHECK_THROWS_AS(split(raw, 0.0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(raw, 0.8, 0.3, 1), ConfigError);
}

TEST_CASE("split is seed-deterministic and seed-sensitive") {
  RawDataset raw;
  raw.num_users = 50;
  raw.num_items = 20;
  for (std::size_t u = 0; u < 50; ++u)
    for (std::size_t i = 0; i < 4; ++i)
      raw.interactions.push_back({u, (u + i) % 20});
  std::sort(raw.interactions.begin(), raw.interactions.end());
  raw.interactions.erase(
      std::unique(raw.interactions.begin(), raw.interactions.end()),
      raw.interactions.end());
  raw.user_raw_ids.resize(50);
  raw.item_raw_ids.resize(20);
  InteractionStore a = split(raw, 0.8, 0.1, 7);
  InteractionStore b = split(raw, 0.8, 0.1, 7);
  InteractionStore c = split(raw, 0.8, 0.1, 8);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
}

TEST_CASE("degrees count train interactions per user") {
  InteractionStore s;
  s.num_users = 3;
  s.num_items = 4;
  s.train = {{0, 0}, {0, 1}, {2, 3}};
  s.test = {{1, 2}};
  s.rebuild_degrees();
  CHECK(s.user_degree == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("inject_noise adds the rounded count of fresh directed edges") {
  SocialGraph g;
  g.num_users = 30;
  for (std::size_t u = 0; u + 1 < 30; u += 2) {
    g.edges.push_back({u, u + 1});
    g.edges.push_back({u + 1, u});
  }
  std::sort(g.edges.begin(), g.edges.end());
  const std::size_t before = g.edges.size();

  NoisyGraph clean = inject_noise(g, 0.0, 5);
  CHECK(clean.graph.edges == g.edges);
  CHECK(clean.injected.empty());

  NoisyGraph half = inject_noise(g, 0.5, 5);
  CHECK(half.injected.size() == before / 2);
  CHECK(half.graph.edges.size() == before + before / 2);

  std::set<IdPair> originals(g.edges.begin(), g.edges.end());
  std::set<IdPair> seen;
  for (const auto& [s, d] : half.injected) {
    CHECK(s != d);
    CHECK(!originals.count({s, d}));
    CHECK(seen.insert({s, d}).second);
  }
  for (const auto& e : g.edges)
    CHECK(std::binary_search(half.graph.edges.begin(), half.graph.edges.end(), e));
  CHECK(std::is_sorted(half.graph.edges.begin(), half.graph.edges.end()));

  NoisyGraph again = inject_noise(g, 0.5, 5);
  CHECK(again.injected == half.injected);
  CHECK_THROWS_AS(inject_noise(g, -0.1, 5), ConfigError);
}

TEST_CASE("sparsity buckets split 10 users into 4/3/3 by train degree") {
  InteractionStore s;
  s.num_users = 10;
  s.num_items = 12;
  for (std::size_t u = 0; u < 10; ++u)
    for (std::size_t i = 0; i <= u; ++i) s.train.push_back({u, i});
  s.rebuild_degrees();
  SparsityBuckets buckets = bucket_by_sparsity(s);
  std::size_t low = 0, med = 0, high = 0;
  for (Bucket b : buckets.assignment) {
    if (b == Bucket::Low) ++low;
    if (b == Bucket::Medium) ++med;
    if (b == Bucket::High) ++high;
  }
  CHECK(low == 4);
  CHECK(med == 3);
  CHECK(high == 3);
  CHECK(buckets.assignment[0] == Bucket::Low);
  CHECK(buckets.assignment[9] == Bucket::High);
}

TEST_CASE("fingerprint is stable and sensitive") {
  SocialGraph g;
  g.num_users = 4;
  g.edges = {{0, 1}, {1, 0}};
  InteractionStore s;
  s.num_users = 4;
  s.num_items = 3;
  s.train = {{0, 0}, {1, 1}};
  s.test = {{2, 2}};
  s.rebuild_degrees();
  std::string f1 = dataset_fingerprint(s, g);
  std::string f2 = dataset_fingerprint(s, g);
  CHECK(f1 == f2);
  CHECK(f1.size() == 16);
  SocialGraph g2 = g;
  g2.edges.push_back({2, 3});
  CHECK(dataset_fingerprint(s, g2) != f1);
}

TEST_CASE("snapshot round-trips through disk") {
  std::string dir = temp_dir("snap");
  RawDataset raw;
  raw.num_users = 6;
  raw.num_items = 5;
  for (std::size_t u = 0; u < 6; ++u)
    for (std::size_t i = 0; i < 3; ++i)
      raw.interactions.push_back({u, (u + i) % 5});
  std::sort(raw.interactions.begin(), raw.interactions.end());
  raw.interactions.erase(
      std::unique(raw.interactions.begin(), raw.interactions.end()),
      raw.interactions.end());
  for (std::size_t u = 0; u < 6; ++u) raw.user_raw_ids.push_back(u * 10);
  for (std::size_t i = 0; i < 5; ++i) raw.item_raw_ids.push_back(i + 100);
  InteractionStore store = split(raw, 0.8, 0.1, 2);
  SocialGraph social;
  social.num_users = 6;
  social.edges = {{0, 1}, {1, 0}, {2, 5}};
  SnapshotMeta meta;
  meta.seed = 2;
  meta.train_frac = 0.8;
  meta.val_frac = 0.1;
  save_snapshot(dir, store, social, raw, meta);

  Snapshot snap = load_snapshot(dir);
  CHECK(snap.store.num_users == 6);
  CHECK(snap.store.num_items == 5);
  CHECK(snap.store.train == store.train);
  CHECK(snap.store.validation == store.validation);
  CHECK(snap.store.test == store.test);
  CHECK(snap.store.user_degree == store.user_degree);
  CHECK(snap.social.edges == social.edges);
  CHECK(dataset_fingerprint(snap.store, snap.social) ==
        dataset_fingerprint(store, social));
  CHECK_THROWS_AS(load_snapshot(dir + "/missing"), DataError);
}
