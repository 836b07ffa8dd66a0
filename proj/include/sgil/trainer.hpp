#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgil/adam.hpp"
#include "sgil/dataset.hpp"
#include "sgil/encoder.hpp"
#include "sgil/environments.hpp"
#include "sgil/objectives.hpp"

namespace sgil {

struct TrainConfig {
  std::size_t d = 64;
  std::size_t L = 3;
  double tau = 0.2;       // softmax temperature
  double temp = 0.2;      // concrete relaxation temperature
  double eps_bias = 0.5;  // observation bias
  std::size_t K = 4;
  double beta = 0.15;
  double lr = 0.001;
  double ascent_lr = 0.0;  // 0 means: use lr
  std::size_t batch_size = 2048;
  std::size_t adv_period = 20;  // ascent every T batches
  std::size_t max_epochs = 100;
  std::size_t patience = 20;
  std::uint64_t seed = 1;
  std::size_t gen_hidden = 0;  // 0 means: use d
  double init_std = 0.01;
  bool no_env_gen = false;      // backbone: full social weights, K = 1
  bool no_invariance = false;   // beta = 0
  bool no_exploration = false;  // never ascend
  bool use_validation = false;  // monitor the validation split instead of test
  std::size_t monitor_cutoff = 20;
  std::vector<std::size_t> eval_cutoffs = {10, 20};
  std::size_t threads = 1;
  bool timing = false;

  std::size_t effective_k() const { return no_env_gen ? 1 : K; }
  double effective_beta() const { return no_invariance ? 0.0 : beta; }
  std::size_t effective_hidden() const { return gen_hidden ? gen_hidden : d; }
  double effective_ascent_lr() const { return ascent_lr > 0.0 ? ascent_lr : lr; }
  void validate() const;
};

struct ModelParams {
  EmbeddingTables tables;
  std::vector<EnvGeneratorParams> gens;  // empty when no_env_gen
};

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  Adam descent;
  Adam ascent;
  std::size_t epoch = 0;          // completed epochs
  std::uint64_t global_step = 0;  // completed batches
  double best_metric = -1.0;
  std::size_t best_epoch = 0;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<std::string> loss_log;  // CSV lines including header
  std::vector<std::string> eval_log;
  std::size_t epochs_run = 0;
};

// Ascent on the generator parameters: one Adam step against the negated
// variance gradients. Gradients arrive in slot order (W1, b1, W2, b2 per
// generator).
void adversarial_step(Adam& ascent, std::vector<EnvGeneratorParams>& gens,
                      const std::vector<DenseMatrix>& variance_grads);

// Evaluation-time embeddings: environments re-sampled once from the eval
// noise stream, U = mean_k P^k, V = mean_k Q^k.
std::pair<DenseMatrix, DenseMatrix> infer_embeddings(
    const TrainConfig& cfg, const ModelParams& params,
    const HeteroAdjacency& adj, const SocialGraph& social);

// Inner-product score rows for the queried users, train items masked to
// -infinity.
DenseMatrix infer_scores(const DenseMatrix& U, const DenseMatrix& V,
                         const std::vector<std::size_t>& users,
                         const InteractionStore& mask_store);

class Trainer {
 public:
  Trainer(TrainConfig cfg, InteractionStore store, SocialGraph social);
  Trainer(TrainConfig cfg, InteractionStore store, SocialGraph social,
          const Checkpoint& resume);

  // The full per-batch objective on one tape. Exposed for gradient tests.
  struct Objective {
    Tape tape;
    Tape::NodeId p0 = -1, q0 = -1;
    std::vector<GenNodes> gens;
    std::vector<Tape::NodeId> env_weights;  // soft social weights per env
    std::vector<Tape::NodeId> losses;
    Tape::NodeId mean = -1, variance = -1, total = -1;
  };
  Objective build_objective(const Batch& batch, std::uint64_t step);
  // Variant with the per-environment soft weights given directly as leaves
  // (bypasses the generators; used for weight-gradient checks).
  Objective build_objective_from_weights(
      const Batch& batch, const std::vector<std::vector<double>>& env_weights);

  // One descent step (and the scheduled ascent) on the given batch.
  LossBreakdown train_step(const Batch& batch);

  // Carries the previous best checkpoint across a resume so the best model
  // is only replaced when actually beaten.
  void set_initial_best(const Checkpoint& best);

  TrainResult run(const std::string& out_dir = "");

  std::pair<DenseMatrix, DenseMatrix> infer() const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const HeteroAdjacency& adjacency() const { return adj_; }
  const TrainConfig& config() const { return cfg_; }
  std::uint64_t global_step() const { return global_step_; }
  Adam& descent_optimizer() { return descent_; }
  Adam& ascent_optimizer() { return ascent_; }

 private:
  void register_slots();
  Checkpoint snapshot() const;
  double monitored_metric() const;
  std::vector<Batch> make_epoch_batches(std::size_t epoch) const;
  std::string loss_log_header() const;

  TrainConfig cfg_;
  InteractionStore store_;
  SocialGraph social_;
  HeteroAdjacency adj_;
  ModelParams params_;
  Adam descent_;
  Adam ascent_;
  std::size_t epoch_ = 0;
  std::uint64_t global_step_ = 0;
  double best_metric_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::optional<Checkpoint> initial_best_;
};

}  // namespace sgil
