#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgil/dataset.hpp"
#include "sgil/evaluator.hpp"
#include "sgil/trainer.hpp"

namespace sgil {

// Test-split report for a trained model under the given config.
EvalReport evaluate_params(const TrainConfig& cfg, const ModelParams& params,
                           const InteractionStore& store,
                           const SocialGraph& social,
                           const std::vector<std::size_t>& cutoffs,
                           std::size_t threads);

// For each injection ratio, trains the backbone and SGIL on the noised
// graph with the same seeds and reports the monitored NDCG averaged over
// seeds plus the relative gain over the backbone. CSV lines, header first.
std::vector<std::string> noise_sweep(const TrainConfig& base,
                                     const InteractionStore& store,
                                     const SocialGraph& social,
                                     const std::vector<double>& ratios,
                                     const std::vector<std::uint64_t>& seeds);

// One trained run per (K, beta) cell; monitored NDCG per cell. CSV lines.
std::vector<std::string> sensitivity_grid(const TrainConfig& base,
                                          const InteractionStore& store,
                                          const SocialGraph& social,
                                          const std::vector<std::size_t>& k_values,
                                          const std::vector<double>& beta_values);

}  // namespace sgil
