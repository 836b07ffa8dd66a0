#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgil/dataset.hpp"
#include "sgil/dense.hpp"
#include "sgil/tape.hpp"

namespace sgil {

// One environment generator: a two-layer MLP over concatenated endpoint
// embeddings, producing a raw logit per social edge.
struct EnvGeneratorParams {
  DenseMatrix W1;  // 2d x h
  DenseMatrix b1;  // 1 x h
  DenseMatrix W2;  // h x 1
  DenseMatrix b2;  // 1 x 1

  static EnvGeneratorParams init(std::size_t d, std::size_t h,
                                 std::uint64_t seed, std::size_t k);
};

// Soft-weighted social subgraph: base edges plus per-edge weights in [0,1],
// aligned to the canonical edge order. Non-edges never gain weight.
struct SoftSocialGraph {
  SocialGraph base;
  std::vector<double> weights;
};

// Per-edge logistic noise log(delta / (1 - delta)), delta ~ U(0,1) open.
DenseMatrix logistic_noise(std::size_t n_edges, Rng& rng);

// Training noise stream for environment k at a global step; evaluation
// re-samples once from a separate stream.
Rng env_noise_stream(std::uint64_t seed, std::size_t k, std::uint64_t step);
Rng eval_noise_stream(std::uint64_t seed, std::size_t k);

// ---- value-level path (inference, tests) ----

DenseMatrix edge_logits(const EnvGeneratorParams& gen,
                        const DenseMatrix& user_embeds,
                        const SocialGraph& edges);

// sigmoid((noise + logit) / t) with the noise drawn from rng.
std::vector<double> concrete_relax(const DenseMatrix& logits, double t,
                                   Rng& rng);
std::vector<double> concrete_relax_with_noise(const DenseMatrix& logits,
                                              const DenseMatrix& noise,
                                              double t);

// weight = min(relaxed + eps, 1).
SoftSocialGraph sample_environment(const EnvGeneratorParams& gen,
                                   const DenseMatrix& user_embeds,
                                   const SocialGraph& social, double t,
                                   double eps, Rng& rng);

std::vector<SoftSocialGraph> simulate_all(
    const std::vector<EnvGeneratorParams>& gens,
    const DenseMatrix& user_embeds, const SocialGraph& social, double t,
    double eps, std::uint64_t seed, std::uint64_t step);

void dump_environment_csv(const std::string& path, const SoftSocialGraph& g);

// ---- tape path (training) ----

struct GenNodes {
  Tape::NodeId W1, b1, W2, b2;
};

GenNodes gen_leaves(Tape& t, const EnvGeneratorParams& gen, std::size_t k);

Tape::NodeId edge_logits_tape(Tape& t, const GenNodes& gen,
                              Tape::NodeId user_embeds,
                              const SocialGraph& social);

// Differentiable w.r.t. the logits; noise is a constant (reparameterization).
Tape::NodeId concrete_relax_tape(Tape& t, Tape::NodeId logits,
                                 const DenseMatrix& noise, double temp);

Tape::NodeId sample_environment_tape(Tape& t, const GenNodes& gen,
                                     Tape::NodeId user_embeds,
                                     const SocialGraph& social,
                                     const DenseMatrix& noise, double temp,
                                     double eps);

}  // namespace sgil
