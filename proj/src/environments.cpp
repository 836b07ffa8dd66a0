#include "sgil/environments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sgil/errors.hpp"
#include "sgil/mlp.hpp"

namespace sgil {

namespace {

void check_temp(double t) {
  if (!(t > 0.0)) throw ConfigError("relaxation temperature must be > 0");
}

void check_eps(double eps) {
  if (eps < 0.0 || eps >= 1.0)
    throw ConfigError("observation bias must be in [0, 1)");
}

DenseMatrix edge_inputs(const DenseMatrix& user_embeds,
                        const SocialGraph& social) {
  const std::size_t d = user_embeds.cols();
  DenseMatrix in(social.edges.size(), 2 * d);
  for (std::size_t e = 0; e < social.edges.size(); ++e) {
    const auto& [a, b] = social.edges[e];
    for (std::size_t c = 0; c < d; ++c) {
      in(e, c) = user_embeds(a, c);
      in(e, d + c) = user_embeds(b, c);
    }
  }
  return in;
}

}  // namespace

EnvGeneratorParams EnvGeneratorParams::init(std::size_t d, std::size_t h,
                                            std::uint64_t seed,
                                            std::size_t k) {
  Rng rng = Rng::derive(seed, "env_generator", k);
  EnvGeneratorParams p;
  const double lim1 = std::sqrt(6.0 / static_cast<double>(2 * d + h));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(h + 1));
  p.W1 = DenseMatrix::uniform(2 * d, h, -lim1, lim1, rng);
  p.b1 = DenseMatrix(1, h);
  p.W2 = DenseMatrix::uniform(h, 1, -lim2, lim2, rng);
  p.b2 = DenseMatrix(1, 1);
  return p;
}

DenseMatrix logistic_noise(std::size_t n_edges, Rng& rng) {
  DenseMatrix out(n_edges, 1);
  for (std::size_t e = 0; e < n_edges; ++e) {
    const double delta = rng.next_open();
    out(e, 0) = std::log(delta / (1.0 - delta));
  }
  return out;
}

Rng env_noise_stream(std::uint64_t seed, std::size_t k, std::uint64_t step) {
  return Rng::derive(seed, "env_noise",
                     (static_cast<std::uint64_t>(k) << 40) | step);
}

Rng eval_noise_stream(std::uint64_t seed, std::size_t k) {
  return Rng::derive(seed, "eval_noise", k);
}

DenseMatrix edge_logits(const EnvGeneratorParams& gen,
                        const DenseMatrix& user_embeds,
                        const SocialGraph& edges) {
  return mlp2_forward_value(edge_inputs(user_embeds, edges), gen.W1, gen.b1,
                            gen.W2, gen.b2);
}

std::vector<double> concrete_relax_with_noise(const DenseMatrix& logits,
                                              const DenseMatrix& noise,
                                              double t) {
  check_temp(t);
  if (!logits.same_shape(noise))
    throw ShapeError("logits/noise shape mismatch");
  std::vector<double> out(logits.rows());
  for (std::size_t e = 0; e < logits.rows(); ++e) {
    const double z = (noise(e, 0) + logits(e, 0)) / t;
    out[e] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                      : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

std::vector<double> concrete_relax(const DenseMatrix& logits, double t,
                                   Rng& rng) {
  check_temp(t);
  return concrete_relax_with_noise(logits, logistic_noise(logits.rows(), rng),
                                   t);
}

SoftSocialGraph sample_environment(const EnvGeneratorParams& gen,
                                   const DenseMatrix& user_embeds,
                                   const SocialGraph& social, double t,
                                   double eps, Rng& rng) {
  check_eps(eps);
  SoftSocialGraph g;
  g.base = social;
  g.weights = concrete_relax(edge_logits(gen, user_embeds, social), t, rng);
  for (double& w : g.weights) w = std::min(w + eps, 1.0);
  return g;
}

std::vector<SoftSocialGraph> simulate_all(
    const std::vector<EnvGeneratorParams>& gens,
    const DenseMatrix& user_embeds, const SocialGraph& social, double t,
    double eps, std::uint64_t seed, std::uint64_t step) {
  std::vector<SoftSocialGraph> out;
  out.reserve(gens.size());
  for (std::size_t k = 0; k < gens.size(); ++k) {
    Rng rng = env_noise_stream(seed, k, step);
    out.push_back(
        sample_environment(gens[k], user_embeds, social, t, eps, rng));
  }
  return out;
}

void dump_environment_csv(const std::string& path, const SoftSocialGraph& g) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "src,dst,weight\n";
  char buf[32];
  for (std::size_t e = 0; e < g.base.edges.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%.17g", g.weights[e]);
    out << g.base.edges[e].first << ',' << g.base.edges[e].second << ','
        << buf << '\n';
  }
}

GenNodes gen_leaves(Tape& t, const EnvGeneratorParams& gen, std::size_t k) {
  const std::string p = "gen" + std::to_string(k) + ".";
  GenNodes n;
  n.W1 = t.leaf(gen.W1, p + "W1");
  n.b1 = t.leaf(gen.b1, p + "b1");
  n.W2 = t.leaf(gen.W2, p + "W2");
  n.b2 = t.leaf(gen.b2, p + "b2");
  return n;
}

Tape::NodeId edge_logits_tape(Tape& t, const GenNodes& gen,
                              Tape::NodeId user_embeds,
                              const SocialGraph& social) {
  std::vector<std::size_t> src(social.edges.size());
  std::vector<std::size_t> dst(social.edges.size());
  for (std::size_t e = 0; e < social.edges.size(); ++e) {
    src[e] = social.edges[e].first;
    dst[e] = social.edges[e].second;
  }
  Tape::NodeId in = t.concat_cols(t.gather_rows(user_embeds, std::move(src)),
                                  t.gather_rows(user_embeds, std::move(dst)));
  return mlp2_forward(t, in, gen.W1, gen.b1, gen.W2, gen.b2);
}

Tape::NodeId concrete_relax_tape(Tape& t, Tape::NodeId logits,
                                 const DenseMatrix& noise, double temp) {
  check_temp(temp);
  Tape::NodeId z = t.add(logits, t.constant(noise));
  return t.sigmoid(t.scale(z, 1.0 / temp));
}

Tape::NodeId sample_environment_tape(Tape& t, const GenNodes& gen,
                                     Tape::NodeId user_embeds,
                                     const SocialGraph& social,
                                     const DenseMatrix& noise, double temp,
                                     double eps) {
  check_eps(eps);
  Tape::NodeId logits = edge_logits_tape(t, gen, user_embeds, social);
  Tape::NodeId sample = concrete_relax_tape(t, logits, noise, temp);
  return t.clamp_max(t.add_scalar(sample, eps), 1.0);
}

}  // namespace sgil
