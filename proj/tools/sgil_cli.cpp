#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgil/config.hpp"
#include "sgil/dataset.hpp"
#include "sgil/errors.hpp"
#include "sgil/evaluator.hpp"
#include "sgil/serialize.hpp"
#include "sgil/sweeps.hpp"
#include "sgil/trainer.hpp"

namespace fs = std::filesystem;
using namespace sgil;

namespace {

constexpr const char* kVersion = "1.0.0";

// Relative output paths land under SGIL_OUTPUT_ROOT when it is set.
std::string resolve_out(const std::string& path) {
  const char* root = std::getenv("SGIL_OUTPUT_ROOT");
  if (!root || !*root || path.empty() || fs::path(path).is_absolute())
    return path;
  return (fs::path(root) / path).string();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a comma-separated number list, got '" +
                        text + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& key,
                                          const std::string& text) {
  std::vector<std::uint64_t> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a comma-separated integer list, got '" +
                        text + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<std::size_t> to_size_list(const std::vector<std::uint64_t>& xs) {
  return {xs.begin(), xs.end()};
}

void write_lines(const std::string& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& line : lines) out << line << '\n';
  if (!out) throw DataError("write failed: " + path);
}

void write_pairs(const std::string& path, const std::vector<IdPair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& [a, b] : pairs) out << a << ' ' << b << '\n';
  if (!out) throw DataError("write failed: " + path);
}

void apply_ablations(ConfigMap& map, const std::vector<std::string>& names) {
  for (const std::string& name : names) {
    if (name == "no-env-gen") map["no_env_gen"] = "true";
    else if (name == "no-invariance") map["no_invariance"] = "true";
    else if (name == "no-exploration") map["no_exploration"] = "true";
    else
      throw ConfigError("unknown ablation '" + name +
                        "' (expected no-env-gen, no-invariance, no-exploration)");
  }
}

struct PrepareArgs {
  std::string interactions, social, out;
  double rating_threshold = 0.0;
  bool has_threshold = false;
  bool symmetrize = false;
  std::uint64_t seed = 1;
  double train_frac = 0.8;
  double val_frac = 0.0;
};

int run_prepare(const PrepareArgs& a) {
  LoadResult loaded = load_dataset(
      a.interactions, a.social,
      a.has_threshold ? std::optional<double>(a.rating_threshold)
                      : std::nullopt,
      a.symmetrize);
  InteractionStore store = split(loaded.data, a.train_frac, a.val_frac, a.seed);
  SnapshotMeta meta;
  meta.seed = a.seed;
  if (a.has_threshold) meta.rating_threshold = a.rating_threshold;
  meta.train_frac = a.train_frac;
  meta.val_frac = a.val_frac;
  meta.symmetrized = a.symmetrize;
  const std::string out = resolve_out(a.out);
  save_snapshot(out, store, loaded.social, loaded.data, meta);
  std::cout << "snapshot " << out << ": users=" << store.num_users
            << " items=" << store.num_items << " train=" << store.train.size()
            << " validation=" << store.validation.size()
            << " test=" << store.test.size()
            << " social=" << loaded.social.edges.size() << "\n";
  std::cout << "dropped_by_threshold=" << loaded.dropped_by_threshold
            << " duplicate_interactions=" << loaded.duplicate_interactions
            << " social_self_loops=" << loaded.social_self_loops
            << " duplicate_social_edges=" << loaded.duplicate_social_edges
            << "\n";
  std::cout << "fingerprint=" << dataset_fingerprint(store, loaded.social)
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string config_path, dataset, out, resume;
  std::vector<std::string> sets;
  std::vector<std::string> ablations;
  std::string k, beta, seed, lr, batch_size, max_epochs, patience, threads;
  bool timing = false;
  bool use_validation = false;
};

void write_run_manifest(const std::string& path, const TrainConfig& cfg,
                        const std::string& fingerprint,
                        const std::vector<std::string>& outputs,
                        const TrainResult& result) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config"] = config_to_map(cfg);
  j["config_hash"] = config_hash(config_to_map(cfg));
  j["dataset_fingerprint"] = fingerprint;
  j["seed"] = cfg.seed;
  j["outputs"] = outputs;
  j["best_metric"] = result.best.best_metric;
  j["best_epoch"] = result.best.best_epoch;
  j["epochs_run"] = result.epochs_run;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

int run_train(const TrainArgs& a) {
  Snapshot snap = load_snapshot(a.dataset);
  const std::string out = resolve_out(a.out);
  fs::create_directories(out);

  TrainResult result;
  TrainConfig effective;
  if (!a.resume.empty()) {
    if (!a.config_path.empty() || !a.sets.empty() || !a.ablations.empty())
      throw ConfigError("--resume uses the checkpoint's config; drop --config/--set/--ablation");
    Checkpoint last = load_checkpoint(a.resume + "/checkpoint_last");
    Trainer trainer(last.config, snap.store, snap.social, last);
    if (fs::exists(a.resume + "/checkpoint_best.json"))
      trainer.set_initial_best(load_checkpoint(a.resume + "/checkpoint_best"));
    effective = trainer.config();
    result = trainer.run(out);
  } else {
    ConfigMap map = config_to_map(TrainConfig{});
    if (!a.config_path.empty()) {
      for (auto& [key, value] : parse_config_file(a.config_path))
        map[key] = value;
    }
    ConfigMap flags;
    if (!a.k.empty()) flags["k"] = a.k;
    if (!a.beta.empty()) flags["beta"] = a.beta;
    if (!a.seed.empty()) flags["seed"] = a.seed;
    if (!a.lr.empty()) flags["lr"] = a.lr;
    if (!a.batch_size.empty()) flags["batch_size"] = a.batch_size;
    if (!a.max_epochs.empty()) flags["max_epochs"] = a.max_epochs;
    if (!a.patience.empty()) flags["patience"] = a.patience;
    if (!a.threads.empty()) flags["threads"] = a.threads;
    if (a.timing) flags["timing"] = "true";
    if (a.use_validation) flags["use_validation"] = "true";
    for (auto& [key, value] : flags) map[key] = value;
    apply_overrides(map, a.sets);
    apply_ablations(map, a.ablations);
    TrainConfig cfg = config_from_map(map);
    Trainer trainer(cfg, snap.store, snap.social);
    effective = trainer.config();
    result = trainer.run(out);
  }

  std::vector<std::string> outputs = {
      "train_log.csv", "eval_history.csv", "checkpoint_best.tns",
      "checkpoint_best.json", "checkpoint_last.tns", "checkpoint_last.json",
      "run_manifest.json"};
  if (effective.timing) outputs.push_back("timing.txt");
  write_run_manifest(out + "/run_manifest.json", effective,
                     dataset_fingerprint(snap.store, snap.social), outputs,
                     result);
  std::cout << "trained " << result.epochs_run << " epochs; best ndcg_at_"
            << effective.monitor_cutoff << "="
            << fmt_double(result.best.best_metric) << " at epoch "
            << result.best.best_epoch << "\n";
  std::cout << "outputs in " << out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint, dataset, out;
  std::string cutoffs = "10,20";
  std::string split = "test";
  bool buckets = false;
  bool text = false;
  std::string threads = "1";
};

int run_evaluate(const EvaluateArgs& a) {
  std::string prefix = a.checkpoint;
  if (fs::is_directory(prefix)) prefix += "/checkpoint_best";
  Checkpoint ckpt = load_checkpoint(prefix);
  Snapshot snap = load_snapshot(a.dataset);

  InteractionStore view = snap.store;
  if (a.split == "validation") view.test = snap.store.validation;
  else if (a.split != "test")
    throw ConfigError("--split must be test or validation");

  const std::vector<std::size_t> cutoffs =
      to_size_list(parse_u64_list("--cutoffs", a.cutoffs));
  const std::size_t threads =
      static_cast<std::size_t>(parse_u64_list("--threads", a.threads)[0]);

  SparsityBuckets buckets;
  const SparsityBuckets* buckets_ptr = nullptr;
  if (a.buckets) {
    buckets = bucket_by_sparsity(view);
    buckets_ptr = &buckets;
  }

  HeteroAdjacency adj = HeteroAdjacency::build(
      snap.social, view.train, view.num_users, view.num_items);
  auto [U, V] = infer_embeddings(ckpt.config, ckpt.params, adj, snap.social);
  EvalReport report = evaluate(U, V, view, buckets_ptr, cutoffs, threads);

  const std::string body =
      a.text ? report_to_text(report) : report_to_json(report);
  if (a.out.empty()) {
    std::cout << body;
    if (!body.empty() && body.back() != '\n') std::cout << "\n";
  } else {
    const std::string out = resolve_out(a.out);
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw DataError("cannot write " + out);
    f << body;
    if (!body.empty() && body.back() != '\n') f << "\n";
    std::cout << "report written to " << out << "\n";
  }
  return 0;
}

struct InjectArgs {
  std::string dataset, out;
  double ratio = 0.0;
  std::uint64_t seed = 1;
};

int run_inject(const InjectArgs& a) {
  Snapshot snap = load_snapshot(a.dataset);
  NoisyGraph noised = inject_noise(snap.social, a.ratio, a.seed);
  const std::string out = resolve_out(a.out);
  fs::create_directories(out);
  for (const char* name :
       {"train.txt", "validation.txt", "test.txt", "users.txt", "items.txt"}) {
    fs::copy_file(fs::path(a.dataset) / name, fs::path(out) / name,
                  fs::copy_options::overwrite_existing);
  }
  write_pairs(out + "/social.txt", noised.graph.edges);
  write_pairs(out + "/injected.txt", noised.injected);

  nlohmann::json manifest;
  {
    std::ifstream m(a.dataset + "/manifest.json");
    if (!m) throw DataError("cannot open " + a.dataset + "/manifest.json");
    try {
      m >> manifest;
    } catch (const std::exception& e) {
      throw DataError(a.dataset + "/manifest.json: " + e.what());
    }
  }
  manifest["n_social_edges"] = noised.graph.edges.size();
  manifest["noise_ratio"] = a.ratio;
  manifest["noise_seed"] = a.seed;
  manifest["n_injected"] = noised.injected.size();
  manifest["fingerprint"] = dataset_fingerprint(snap.store, noised.graph);
  manifest["files"] = {"train.txt", "validation.txt", "test.txt",
                       "social.txt", "users.txt",      "items.txt",
                       "injected.txt"};
  std::ofstream m(out + "/manifest.json", std::ios::trunc);
  if (!m) throw DataError("cannot write " + out + "/manifest.json");
  m << manifest.dump(2) << "\n";

  std::cout << "injected " << noised.injected.size() << " edges (ratio "
            << fmt_double(a.ratio) << "); social now "
            << noised.graph.edges.size() << " edges\n";
  std::cout << "noised snapshot in " << out << "\n";
  return 0;
}

struct SweepArgs {
  std::string dataset, out, config_path;
  std::vector<std::string> sets;
  std::string grid_k = "1,2,3,4,5";
  std::string grid_beta = "0,0.05,0.1,0.15,0.2";
  std::string noise_ratios;
  std::string seeds = "1";
};

int run_sweep(const SweepArgs& a) {
  Snapshot snap = load_snapshot(a.dataset);
  ConfigMap map = config_to_map(TrainConfig{});
  if (!a.config_path.empty()) {
    for (auto& [key, value] : parse_config_file(a.config_path))
      map[key] = value;
  }
  apply_overrides(map, a.sets);
  TrainConfig base = config_from_map(map);

  std::vector<std::string> lines;
  if (!a.noise_ratios.empty()) {
    lines = noise_sweep(base, snap.store, snap.social,
                        parse_double_list("--noise-ratios", a.noise_ratios),
                        parse_u64_list("--seeds", a.seeds));
  } else {
    lines = sensitivity_grid(
        base, snap.store, snap.social,
        to_size_list(parse_u64_list("--grid-k", a.grid_k)),
        parse_double_list("--grid-beta", a.grid_beta));
  }
  const std::string out = resolve_out(a.out);
  write_lines(out, lines);
  for (const std::string& line : lines) std::cout << line << "\n";
  std::cout << "grid written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social-graph invariant learning for recommendation"};
  app.require_subcommand(1);

  PrepareArgs prep;
  CLI::App* prepare = app.add_subcommand(
      "prepare", "Load raw interactions and social edges, split, and snapshot");
  prepare->add_option("--interactions", prep.interactions,
                      "Interaction file: user item [rating] per line")
      ->required();
  prepare->add_option("--social", prep.social,
                      "Social edge file: src dst per line")
      ->required();
  CLI::Option* thr_opt = prepare->add_option(
      "--rating-threshold", prep.rating_threshold,
      "Keep interactions with rating >= threshold");
  prepare->add_flag("--symmetrize-social", prep.symmetrize,
                    "Add the reverse of every social edge");
  prepare->add_option("--seed", prep.seed, "Split seed");
  prepare->add_option("--train-frac", prep.train_frac, "Training fraction");
  prepare->add_option("--val-frac", prep.val_frac, "Validation fraction");
  prepare->add_option("--out", prep.out, "Snapshot directory")->required();

  TrainArgs tr;
  CLI::App* train =
      app.add_subcommand("train", "Train on a prepared dataset snapshot");
  train->add_option("--config", tr.config_path, "key=value config file");
  train->add_option("--dataset", tr.dataset, "Snapshot directory")->required();
  train->add_option("--out", tr.out, "Run output directory")->required();
  train->add_option("--resume", tr.resume,
                    "Previous run directory to continue from");
  train->add_option("--set", tr.sets, "Override a config key (key=value)");
  train->add_option("--ablation", tr.ablations,
                    "no-env-gen, no-invariance, or no-exploration");
  train->add_option("--k", tr.k, "Number of environments");
  train->add_option("--beta", tr.beta, "Invariance penalty weight");
  train->add_option("--seed", tr.seed, "Root seed");
  train->add_option("--lr", tr.lr, "Learning rate");
  train->add_option("--batch-size", tr.batch_size, "Batch size");
  train->add_option("--max-epochs", tr.max_epochs, "Epoch cap");
  train->add_option("--patience", tr.patience, "Early-stop patience");
  train->add_option("--threads", tr.threads, "Worker cap (1 = deterministic)");
  train->add_flag("--timing", tr.timing, "Write wall-time sidecar");
  train->add_flag("--use-validation", tr.use_validation,
                  "Monitor the validation split");

  EvaluateArgs ev;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "Full-ranking metrics for a checkpoint");
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint,
                           "Checkpoint prefix or run directory")
      ->required();
  evaluate_cmd->add_option("--dataset", ev.dataset, "Snapshot directory")
      ->required();
  evaluate_cmd->add_option("--cutoffs", ev.cutoffs, "Comma-separated N list");
  evaluate_cmd->add_option("--split", ev.split, "test or validation");
  evaluate_cmd->add_flag("--buckets", ev.buckets,
                         "Break metrics down by sparsity bucket");
  evaluate_cmd->add_flag("--text", ev.text, "Aligned text instead of JSON");
  evaluate_cmd->add_option("--threads", ev.threads, "Worker cap");
  evaluate_cmd->add_option("--out", ev.out, "Report path (default stdout)");

  InjectArgs inj;
  CLI::App* inject = app.add_subcommand(
      "inject-noise", "Add fake social edges to a snapshot");
  inject->add_option("--dataset", inj.dataset, "Snapshot directory")
      ->required();
  inject->add_option("--ratio", inj.ratio, "Fake edges per real edge")
      ->required();
  inject->add_option("--seed", inj.seed, "Injection seed");
  inject->add_option("--out", inj.out, "Noised snapshot directory")->required();

  SweepArgs sw;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "K/beta sensitivity grid or noise-robustness sweep");
  sweep->add_option("--dataset", sw.dataset, "Snapshot directory")->required();
  sweep->add_option("--config", sw.config_path, "key=value config file");
  sweep->add_option("--set", sw.sets, "Override a config key (key=value)");
  sweep->add_option("--grid-k", sw.grid_k, "K values for the grid");
  sweep->add_option("--grid-beta", sw.grid_beta, "beta values for the grid");
  sweep->add_option("--noise-ratios", sw.noise_ratios,
                    "Injection ratios; selects the noise sweep");
  sweep->add_option("--seeds", sw.seeds, "Seeds for the noise sweep");
  sweep->add_option("--out", sw.out, "CSV output path")->required();

  int rc = 0;
  prepare->callback([&] {
    prep.has_threshold = thr_opt->count() > 0;
    rc = run_prepare(prep);
  });
  train->callback([&] { rc = run_train(tr); });
  evaluate_cmd->callback([&] { rc = run_evaluate(ev); });
  inject->callback([&] { rc = run_inject(inj); });
  sweep->callback([&] { rc = run_sweep(sw); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return rc;
}
