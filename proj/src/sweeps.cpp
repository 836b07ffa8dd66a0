#include "sgil/sweeps.hpp"

#include <cstdio>
#include <sstream>

#include "sgil/errors.hpp"

namespace sgil {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double monitored_ndcg(const EvalReport& report, std::size_t cutoff) {
  for (std::size_t i = 0; i < report.cutoffs.size(); ++i)
    if (report.cutoffs[i] == cutoff) return report.ndcg[i];
  throw ConfigError("monitor cutoff " + std::to_string(cutoff) +
                    " missing from evaluation report");
}

// Trains one model to its best checkpoint and reports the monitored NDCG
// on the test split.
double train_and_score(TrainConfig cfg, const InteractionStore& store,
                       const SocialGraph& social) {
  cfg.use_validation = false;
  Trainer trainer(cfg, store, social);
  TrainResult result = trainer.run();
  EvalReport report =
      evaluate_params(trainer.config(), result.best.params, store, social,
                      {trainer.config().monitor_cutoff}, cfg.threads);
  return monitored_ndcg(report, trainer.config().monitor_cutoff);
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

EvalReport evaluate_params(const TrainConfig& cfg, const ModelParams& params,
                           const InteractionStore& store,
                           const SocialGraph& social,
                           const std::vector<std::size_t>& cutoffs,
                           std::size_t threads) {
  HeteroAdjacency adj = HeteroAdjacency::build(social, store.train,
                                               store.num_users, store.num_items);
  auto [U, V] = infer_embeddings(cfg, params, adj, social);
  return evaluate(U, V, store, nullptr, cutoffs, threads);
}

std::vector<std::string> noise_sweep(const TrainConfig& base,
                                     const InteractionStore& store,
                                     const SocialGraph& social,
                                     const std::vector<double>& ratios,
                                     const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("noise sweep needs at least one seed");
  std::vector<std::string> lines;
  lines.push_back("sigma,model,ndcg_at_" + std::to_string(base.monitor_cutoff) +
                  ",relative_gain");
  for (double sigma : ratios) {
    NoisyGraph noised = inject_noise(social, sigma, base.seed);
    std::vector<double> backbone_scores, sgil_scores;
    for (std::uint64_t seed : seeds) {
      TrainConfig backbone = base;
      backbone.seed = seed;
      backbone.no_env_gen = true;
      backbone.no_invariance = true;
      backbone.no_exploration = true;
      backbone_scores.push_back(train_and_score(backbone, store, noised.graph));
      TrainConfig sgil = base;
      sgil.seed = seed;
      sgil_scores.push_back(train_and_score(sgil, store, noised.graph));
    }
    const double backbone_mean = mean_of(backbone_scores);
    const double sgil_mean = mean_of(sgil_scores);
    const double gain = backbone_mean > 0.0
                            ? (sgil_mean - backbone_mean) / backbone_mean
                            : 0.0;
    lines.push_back(fmt_double(sigma) + ",backbone," + fmt_double(backbone_mean) + ",0");
    lines.push_back(fmt_double(sigma) + ",sgil," + fmt_double(sgil_mean) + ',' +
                    fmt_double(gain));
  }
  return lines;
}

std::vector<std::string> sensitivity_grid(const TrainConfig& base,
                                          const InteractionStore& store,
                                          const SocialGraph& social,
                                          const std::vector<std::size_t>& k_values,
                                          const std::vector<double>& beta_values) {
  std::vector<std::string> lines;
  lines.push_back("k,beta,ndcg_at_" + std::to_string(base.monitor_cutoff));
  for (std::size_t k : k_values) {
    for (double beta : beta_values) {
      TrainConfig cfg = base;
      cfg.K = k;
      cfg.beta = beta;
      const double score = train_and_score(cfg, store, social);
      lines.push_back(std::to_string(k) + ',' + fmt_double(beta) + ',' +
                      fmt_double(score));
    }
  }
  return lines;
}

}  // namespace sgil
