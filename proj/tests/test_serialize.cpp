#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sgil/config.hpp"
#include "sgil/errors.hpp"
#include "sgil/serialize.hpp"
#include "sgil/trainer.hpp"
#include "support.hpp"

using namespace sgil;
using namespace sgil::test;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool same_values(const DenseMatrix& a, const DenseMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a.data() == b.data();
}

}  // namespace

TEST_CASE("tensor container round-trips values and bytes") {
  fs::path dir = temp_dir("sgil_serialize_tensors");
  DenseMatrix a(2, 3), b(1, 1);
  double v = 0.1;
  for (std::size_t i = 0; i < a.size(); ++i, v += 0.7) a.at_flat(i) = v;
  b(0, 0) = -1.25e-300;

  const fs::path p1 = dir / "one.tns";
  const fs::path p2 = dir / "two.tns";
  save_tensors(p1.string(), {{"alpha", &a}, {"beta", &b}});
  save_tensors(p2.string(), {{"alpha", &a}, {"beta", &b}});
  CHECK(read_bytes(p1) == read_bytes(p2));

  std::vector<NamedTensor> loaded = load_tensors(p1.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].first == "alpha");
  CHECK(loaded[1].first == "beta");
  CHECK(same_values(loaded[0].second, a));
  CHECK(same_values(loaded[1].second, b));
  fs::remove_all(dir);
}

TEST_CASE("tensor loader rejects garbage") {
  fs::path dir = temp_dir("sgil_serialize_garbage");
  const fs::path missing = dir / "missing.tns";
  CHECK_THROWS_AS(load_tensors(missing.string()), DataError);

  const fs::path bad_magic = dir / "bad_magic.tns";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "NOTMAGIC" << std::string(16, '\0');
  }
  CHECK_THROWS_AS(load_tensors(bad_magic.string()), DataError);

  DenseMatrix a(2, 2);
  const fs::path good = dir / "good.tns";
  save_tensors(good.string(), {{"alpha", &a}});
  std::string bytes = read_bytes(good);
  const fs::path truncated = dir / "truncated.tns";
  {
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  }
  CHECK_THROWS_AS(load_tensors(truncated.string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trips parameters, moments, and counters") {
  fs::path dir = temp_dir("sgil_serialize_ckpt");
  SmallData d = make_small_data(8, 10, 6, 3, 3);
  TrainConfig cfg;
  cfg.d = 6;
  cfg.L = 2;
  cfg.K = 2;
  cfg.gen_hidden = 6;
  cfg.lr = 0.01;
  cfg.batch_size = 4;
  cfg.adv_period = 2;
  cfg.seed = 7;
  cfg.init_std = 0.1;
  cfg.monitor_cutoff = 5;
  cfg.eval_cutoffs = {5, 10};
  Trainer t(cfg, d.store, d.social);
  std::vector<IdPair> head(d.store.train.begin(),
                           d.store.train.begin() + 4);
  Batch batch = Batch::from_pairs(head);
  for (int i = 0; i < 4; ++i) t.train_step(batch);

  Checkpoint c;
  c.config = t.config();
  c.params = t.params();
  c.descent = t.descent_optimizer();
  c.ascent = t.ascent_optimizer();
  c.epoch = 2;
  c.global_step = t.global_step();
  c.best_metric = 0.375;
  c.best_epoch = 1;

  const std::string prefix = (dir / "ckpt").string();
  save_checkpoint(prefix, c);
  CHECK(fs::exists(prefix + ".tns"));
  CHECK(fs::exists(prefix + ".json"));

  Checkpoint r = load_checkpoint(prefix);
  CHECK(r.epoch == 2);
  CHECK(r.global_step == c.global_step);
  CHECK(r.best_metric == 0.375);
  CHECK(r.best_epoch == 1);
  CHECK(r.config.d == cfg.d);
  CHECK(r.config.K == cfg.K);
  CHECK(r.config.seed == cfg.seed);
  CHECK(r.config.eval_cutoffs == c.config.eval_cutoffs);
  CHECK(same_values(r.params.tables.P0, c.params.tables.P0));
  CHECK(same_values(r.params.tables.Q0, c.params.tables.Q0));
  REQUIRE(r.params.gens.size() == c.params.gens.size());
  for (std::size_t k = 0; k < c.params.gens.size(); ++k) {
    CHECK(same_values(r.params.gens[k].W1, c.params.gens[k].W1));
    CHECK(same_values(r.params.gens[k].b1, c.params.gens[k].b1));
    CHECK(same_values(r.params.gens[k].W2, c.params.gens[k].W2));
    CHECK(same_values(r.params.gens[k].b2, c.params.gens[k].b2));
  }
  CHECK(r.descent.step_count() == c.descent.step_count());
  CHECK(r.ascent.step_count() == c.ascent.step_count());

  // The restored trainer must continue exactly like the original.
  Trainer a(cfg, d.store, d.social, c);
  Trainer b(cfg, d.store, d.social, r);
  LossBreakdown la = a.train_step(batch);
  LossBreakdown lb = b.train_step(batch);
  CHECK(la.total == lb.total);
  CHECK(same_values(a.params().tables.P0, b.params().tables.P0));

  // Saving the reloaded checkpoint reproduces the tensor file exactly.
  const std::string prefix2 = (dir / "ckpt2").string();
  save_checkpoint(prefix2, r);
  CHECK(read_bytes(prefix + ".tns") == read_bytes(prefix2 + ".tns"));
  CHECK(read_bytes(prefix + ".json") == read_bytes(prefix2 + ".json"));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loader flags missing tensors") {
  fs::path dir = temp_dir("sgil_serialize_missing");
  SmallData d = make_small_data(8, 10, 6, 3, 3);
  TrainConfig cfg;
  cfg.d = 4;
  cfg.gen_hidden = 4;
  cfg.eval_cutoffs = {5};
  cfg.monitor_cutoff = 5;
  Trainer t(cfg, d.store, d.social);
  Checkpoint c;
  c.config = t.config();
  c.params = t.params();
  c.descent = t.descent_optimizer();
  c.ascent = t.ascent_optimizer();
  const std::string prefix = (dir / "ckpt").string();
  save_checkpoint(prefix, c);

  std::vector<NamedTensor> tensors = load_tensors(prefix + ".tns");
  tensors.erase(tensors.begin());  // drop P0
  std::vector<std::pair<std::string, const DenseMatrix*>> refs;
  for (const auto& [name, mat] : tensors) refs.push_back({name, &mat});
  save_tensors(prefix + ".tns", refs);
  CHECK_THROWS_AS(load_checkpoint(prefix), DataError);
  fs::remove_all(dir);
}

TEST_CASE("config map round-trips every field") {
  TrainConfig cfg;
  cfg.d = 48;
  cfg.L = 2;
  cfg.tau = 0.25;
  cfg.temp = 0.15;
  cfg.eps_bias = 0.4;
  cfg.K = 3;
  cfg.beta = 0.05;
  cfg.lr = 0.002;
  cfg.ascent_lr = 0.0005;
  cfg.batch_size = 512;
  cfg.adv_period = 10;
  cfg.max_epochs = 60;
  cfg.patience = 7;
  cfg.seed = 99;
  cfg.gen_hidden = 32;
  cfg.init_std = 0.02;
  cfg.no_env_gen = false;
  cfg.no_invariance = true;
  cfg.no_exploration = false;
  cfg.use_validation = true;
  cfg.monitor_cutoff = 10;
  cfg.eval_cutoffs = {5, 10, 20};
  cfg.threads = 2;
  cfg.timing = true;

  ConfigMap m = config_to_map(cfg);
  TrainConfig back = config_from_map(m);
  CHECK(back.d == cfg.d);
  CHECK(back.L == cfg.L);
  CHECK(back.tau == cfg.tau);
  CHECK(back.temp == cfg.temp);
  CHECK(back.eps_bias == cfg.eps_bias);
  CHECK(back.K == cfg.K);
  CHECK(back.beta == cfg.beta);
  CHECK(back.lr == cfg.lr);
  CHECK(back.ascent_lr == cfg.ascent_lr);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.adv_period == cfg.adv_period);
  CHECK(back.max_epochs == cfg.max_epochs);
  CHECK(back.patience == cfg.patience);
  CHECK(back.seed == cfg.seed);
  CHECK(back.gen_hidden == cfg.gen_hidden);
  CHECK(back.init_std == cfg.init_std);
  CHECK(back.no_env_gen == cfg.no_env_gen);
  CHECK(back.no_invariance == cfg.no_invariance);
  CHECK(back.no_exploration == cfg.no_exploration);
  CHECK(back.use_validation == cfg.use_validation);
  CHECK(back.monitor_cutoff == cfg.monitor_cutoff);
  CHECK(back.eval_cutoffs == cfg.eval_cutoffs);
  CHECK(back.threads == cfg.threads);
  CHECK(back.timing == cfg.timing);
}

TEST_CASE("config map rejects unknown keys and bad values") {
  ConfigMap m = config_to_map(TrainConfig{});
  ConfigMap with_extra = m;
  with_extra["mystery"] = "1";
  CHECK_THROWS_WITH_AS(config_from_map(with_extra),
                       doctest::Contains("mystery"), ConfigError);

  ConfigMap bad_num = m;
  bad_num["d"] = "sixty-four";
  CHECK_THROWS_AS(config_from_map(bad_num), ConfigError);

  ConfigMap bad_bool = m;
  bad_bool["timing"] = "yes";
  CHECK_THROWS_AS(config_from_map(bad_bool), ConfigError);

  ConfigMap bad_cutoffs = m;
  bad_cutoffs["eval_cutoffs"] = "10,,20";
  CHECK_THROWS_AS(config_from_map(bad_cutoffs), ConfigError);
}

TEST_CASE("config file parsing reports line numbers") {
  fs::path dir = temp_dir("sgil_serialize_config");
  const fs::path good = dir / "good.conf";
  {
    std::ofstream out(good);
    out << "# comment\n\nd = 32\nseed=5\n";
  }
  ConfigMap m = parse_config_file(good.string());
  CHECK(m.at("d") == "32");
  CHECK(m.at("seed") == "5");

  const fs::path dup = dir / "dup.conf";
  {
    std::ofstream out(dup);
    out << "d = 32\nd = 16\n";
  }
  CHECK_THROWS_WITH_AS(parse_config_file(dup.string()),
                       doctest::Contains(":2"), ConfigError);

  const fs::path noeq = dir / "noeq.conf";
  {
    std::ofstream out(noeq);
    out << "d 32\n";
  }
  CHECK_THROWS_AS(parse_config_file(noeq.string()), ConfigError);
  CHECK_THROWS_AS(parse_config_file((dir / "absent.conf").string()),
                  ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("override application and precedence") {
  ConfigMap m = config_to_map(TrainConfig{});
  apply_overrides(m, {"k=8", "beta=0.3"});
  CHECK(m.at("k") == "8");
  CHECK(m.at("beta") == "0.3");
  CHECK_THROWS_AS(apply_overrides(m, {"nonsense"}), ConfigError);
  TrainConfig cfg = config_from_map(m);
  CHECK(cfg.K == 8);
  CHECK(cfg.beta == 0.3);
}

TEST_CASE("config hash is stable and order independent") {
  ConfigMap m = config_to_map(TrainConfig{});
  const std::string h1 = config_hash(m);
  CHECK(h1.size() == 16);
  ConfigMap same;
  for (auto it = m.rbegin(); it != m.rend(); ++it) same[it->first] = it->second;
  CHECK(config_hash(same) == h1);
  ConfigMap other = m;
  other["seed"] = "12345";
  CHECK(config_hash(other) != h1);
}
