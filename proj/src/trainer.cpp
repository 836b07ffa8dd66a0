#include "sgil/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "sgil/errors.hpp"
#include "sgil/evaluator.hpp"
#include "sgil/rng.hpp"
#include "sgil/serialize.hpp"

namespace sgil {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_lines(const std::string& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& l : lines) out << l << '\n';
}

}  // namespace

void TrainConfig::validate() const {
  if (d == 0) throw ConfigError("d must be >= 1");
  if (K == 0) throw ConfigError("K must be >= 1");
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (ascent_lr < 0.0) throw ConfigError("ascent_lr must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (adv_period == 0) throw ConfigError("adv_period must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(temp > 0.0)) throw ConfigError("temp must be > 0");
  if (eps_bias < 0.0 || eps_bias >= 1.0)
    throw ConfigError("eps_bias must be in [0, 1)");
  if (init_std <= 0.0) throw ConfigError("init_std must be > 0");
  if (monitor_cutoff == 0) throw ConfigError("monitor_cutoff must be >= 1");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (eval_cutoffs.empty()) throw ConfigError("eval_cutoffs must be nonempty");
}

void adversarial_step(Adam& ascent, std::vector<EnvGeneratorParams>& gens,
                      const std::vector<DenseMatrix>& variance_grads) {
  if (variance_grads.size() != gens.size() * 4)
    throw ShapeError("expected four gradient tensors per generator");
  std::vector<DenseMatrix> neg(variance_grads.size());
  for (std::size_t i = 0; i < variance_grads.size(); ++i) {
    neg[i] = variance_grads[i];
    for (std::size_t j = 0; j < neg[i].size(); ++j)
      neg[i].at_flat(j) = -neg[i].at_flat(j);
  }
  std::vector<DenseMatrix*> params;
  std::vector<const DenseMatrix*> grads;
  for (std::size_t k = 0; k < gens.size(); ++k) {
    params.push_back(&gens[k].W1);
    params.push_back(&gens[k].b1);
    params.push_back(&gens[k].W2);
    params.push_back(&gens[k].b2);
  }
  for (const DenseMatrix& g : neg) grads.push_back(&g);
  ascent.step(params, grads);
}

std::pair<DenseMatrix, DenseMatrix> infer_embeddings(
    const TrainConfig& cfg, const ModelParams& params,
    const HeteroAdjacency& adj, const SocialGraph& social) {
  const std::size_t K = cfg.effective_k();
  DenseMatrix U(adj.M, cfg.d), V(adj.N, cfg.d);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> weights;
    if (cfg.no_env_gen) {
      weights.assign(social.edges.size(), 1.0);
    } else {
      Rng rng = eval_noise_stream(cfg.seed, k);
      weights = sample_environment(params.gens[k], params.tables.P0, social,
                                   cfg.temp, cfg.eps_bias, rng)
                    .weights;
    }
    auto [P, Q] = propagate_value(adj, weights, params.tables.P0,
                                  params.tables.Q0, cfg.L);
    for (std::size_t i = 0; i < U.size(); ++i) U.at_flat(i) += P.at_flat(i);
    for (std::size_t i = 0; i < V.size(); ++i) V.at_flat(i) += Q.at_flat(i);
  }
  const double inv = 1.0 / static_cast<double>(K);
  for (std::size_t i = 0; i < U.size(); ++i) U.at_flat(i) *= inv;
  for (std::size_t i = 0; i < V.size(); ++i) V.at_flat(i) *= inv;
  return {std::move(U), std::move(V)};
}

DenseMatrix infer_scores(const DenseMatrix& U, const DenseMatrix& V,
                         const std::vector<std::size_t>& users,
                         const InteractionStore& mask_store) {
  DenseMatrix scores(users.size(), V.rows());
  for (std::size_t r = 0; r < users.size(); ++r)
    for (std::size_t i = 0; i < V.rows(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < U.cols(); ++c) s += U(users[r], c) * V(i, c);
      scores(r, i) = s;
    }
  for (const auto& [u, i] : mask_store.train) {
    for (std::size_t r = 0; r < users.size(); ++r)
      if (users[r] == u)
        scores(r, i) = -std::numeric_limits<double>::infinity();
  }
  return scores;
}

Trainer::Trainer(TrainConfig cfg, InteractionStore store, SocialGraph social)
    : cfg_(std::move(cfg)), store_(std::move(store)), social_(std::move(social)) {
  cfg_.validate();
  if (store_.train.empty()) throw DataError("empty train split");
  if (std::find(cfg_.eval_cutoffs.begin(), cfg_.eval_cutoffs.end(),
                cfg_.monitor_cutoff) == cfg_.eval_cutoffs.end())
    cfg_.eval_cutoffs.push_back(cfg_.monitor_cutoff);
  if (cfg_.use_validation && store_.validation.empty())
    throw ConfigError("use_validation requires a validation split");

  adj_ = HeteroAdjacency::build(social_, store_.train, store_.num_users,
                                store_.num_items);
  params_.tables = EmbeddingTables::init(store_.num_users, store_.num_items,
                                         cfg_.d, cfg_.init_std, cfg_.seed);
  if (!cfg_.no_env_gen) {
    for (std::size_t k = 0; k < cfg_.effective_k(); ++k)
      params_.gens.push_back(EnvGeneratorParams::init(
          cfg_.d, cfg_.effective_hidden(), cfg_.seed, k));
  }
  descent_ = Adam({cfg_.lr});
  ascent_ = Adam({cfg_.effective_ascent_lr()});
  register_slots();
}

Trainer::Trainer(TrainConfig cfg, InteractionStore store, SocialGraph social,
                 const Checkpoint& resume)
    : Trainer(std::move(cfg), std::move(store), std::move(social)) {
  params_ = resume.params;
  descent_ = resume.descent;
  ascent_ = resume.ascent;
  epoch_ = resume.epoch;
  global_step_ = resume.global_step;
  // Best tracking restarts at the resume point unless set_initial_best
  // supplies the previous best checkpoint.
  best_metric_ = -1.0;
  best_epoch_ = epoch_;
}

void Trainer::set_initial_best(const Checkpoint& best) {
  initial_best_ = best;
  best_metric_ = best.best_metric;
  best_epoch_ = best.best_epoch;
}

void Trainer::register_slots() {
  descent_.add_param("P0", params_.tables.P0.rows(), params_.tables.P0.cols());
  descent_.add_param("Q0", params_.tables.Q0.rows(), params_.tables.Q0.cols());
  for (std::size_t k = 0; k < params_.gens.size(); ++k) {
    const std::string p = "gen" + std::to_string(k) + ".";
    const EnvGeneratorParams& g = params_.gens[k];
    descent_.add_param(p + "W1", g.W1.rows(), g.W1.cols());
    descent_.add_param(p + "b1", g.b1.rows(), g.b1.cols());
    descent_.add_param(p + "W2", g.W2.rows(), g.W2.cols());
    descent_.add_param(p + "b2", g.b2.rows(), g.b2.cols());
    ascent_.add_param(p + "W1", g.W1.rows(), g.W1.cols());
    ascent_.add_param(p + "b1", g.b1.rows(), g.b1.cols());
    ascent_.add_param(p + "W2", g.W2.rows(), g.W2.cols());
    ascent_.add_param(p + "b2", g.b2.rows(), g.b2.cols());
  }
}

Trainer::Objective Trainer::build_objective(const Batch& batch,
                                            std::uint64_t step) {
  Objective obj;
  Tape& t = obj.tape;
  obj.p0 = t.leaf(params_.tables.P0, "P0");
  obj.q0 = t.leaf(params_.tables.Q0, "Q0");
  const std::size_t K = cfg_.effective_k();
  for (std::size_t k = 0; k < K; ++k) {
    Tape::NodeId soft;
    if (cfg_.no_env_gen) {
      soft = t.constant(DenseMatrix::filled(social_.edges.size(), 1, 1.0));
    } else {
      obj.gens.push_back(gen_leaves(t, params_.gens[k], k));
      Rng rng = env_noise_stream(cfg_.seed, k, step);
      const DenseMatrix noise = logistic_noise(social_.edges.size(), rng);
      soft = sample_environment_tape(t, obj.gens.back(), obj.p0, social_,
                                     noise, cfg_.temp, cfg_.eps_bias);
    }
    obj.env_weights.push_back(soft);
    Tape::NodeId full = hetero_weights(t, adj_, soft);
    Tape::NodeId norm = normalize_adjacency(t, adj_, full);
    PropagationNodes prop = propagate(t, adj_, norm, obj.p0, obj.q0, cfg_.L);
    obj.losses.push_back(
        erm_softmax_loss_tape(t, prop.P, prop.Q, batch, cfg_.tau));
  }
  obj.mean = t.mean_of(obj.losses);
  obj.variance = t.variance_of(obj.losses);
  obj.total = t.add_scaled(obj.mean, obj.variance, cfg_.effective_beta());
  return obj;
}

Trainer::Objective Trainer::build_objective_from_weights(
    const Batch& batch, const std::vector<std::vector<double>>& env_weights) {
  Objective obj;
  Tape& t = obj.tape;
  obj.p0 = t.leaf(params_.tables.P0, "P0");
  obj.q0 = t.leaf(params_.tables.Q0, "Q0");
  for (std::size_t k = 0; k < env_weights.size(); ++k) {
    if (env_weights[k].size() != social_.edges.size())
      throw ShapeError("one weight per social edge required");
    DenseMatrix w(social_.edges.size(), 1);
    for (std::size_t e = 0; e < env_weights[k].size(); ++e)
      w(e, 0) = env_weights[k][e];
    Tape::NodeId soft = t.leaf(w, "weights" + std::to_string(k));
    obj.env_weights.push_back(soft);
    Tape::NodeId full = hetero_weights(t, adj_, soft);
    Tape::NodeId norm = normalize_adjacency(t, adj_, full);
    PropagationNodes prop = propagate(t, adj_, norm, obj.p0, obj.q0, cfg_.L);
    obj.losses.push_back(
        erm_softmax_loss_tape(t, prop.P, prop.Q, batch, cfg_.tau));
  }
  obj.mean = t.mean_of(obj.losses);
  obj.variance = t.variance_of(obj.losses);
  obj.total = t.add_scaled(obj.mean, obj.variance, cfg_.effective_beta());
  return obj;
}

LossBreakdown Trainer::train_step(const Batch& batch) {
  Objective obj = build_objective(batch, global_step_);
  Tape& t = obj.tape;

  std::vector<double> per_env(obj.losses.size());
  for (std::size_t k = 0; k < obj.losses.size(); ++k)
    per_env[k] = t.value(obj.losses[k]).as_scalar();
  LossBreakdown breakdown =
      invariance_objective(per_env, cfg_.effective_beta());
  if (!std::isfinite(breakdown.total))
    throw NumericalError("non-finite loss at step " +
                         std::to_string(global_step_));

  t.backward(obj.total);
  std::vector<DenseMatrix> grads;
  grads.push_back(t.grad(obj.p0));
  grads.push_back(t.grad(obj.q0));
  for (const GenNodes& g : obj.gens) {
    grads.push_back(t.grad(g.W1));
    grads.push_back(t.grad(g.b1));
    grads.push_back(t.grad(g.W2));
    grads.push_back(t.grad(g.b2));
  }
  std::vector<DenseMatrix*> param_ptrs = {&params_.tables.P0,
                                          &params_.tables.Q0};
  for (EnvGeneratorParams& g : params_.gens) {
    param_ptrs.push_back(&g.W1);
    param_ptrs.push_back(&g.b1);
    param_ptrs.push_back(&g.W2);
    param_ptrs.push_back(&g.b2);
  }
  std::vector<const DenseMatrix*> grad_ptrs;
  for (const DenseMatrix& g : grads) grad_ptrs.push_back(&g);
  descent_.step(param_ptrs, grad_ptrs);

  const bool ascend = !cfg_.no_exploration && !cfg_.no_env_gen &&
                      (global_step_ + 1) % cfg_.adv_period == 0;
  if (ascend) {
    t.backward(obj.variance);
    std::vector<DenseMatrix> var_grads;
    for (const GenNodes& g : obj.gens) {
      var_grads.push_back(t.grad(g.W1));
      var_grads.push_back(t.grad(g.b1));
      var_grads.push_back(t.grad(g.W2));
      var_grads.push_back(t.grad(g.b2));
    }
    adversarial_step(ascent_, params_.gens, var_grads);
  }
  ++global_step_;
  return breakdown;
}

std::vector<Batch> Trainer::make_epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order(store_.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::derive(cfg_.seed, "shuffle", epoch);
  rng.shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size();
       start += cfg_.batch_size) {
    const std::size_t end = std::min(start + cfg_.batch_size, order.size());
    std::vector<IdPair> pairs;
    pairs.reserve(end - start);
    for (std::size_t i = start; i < end; ++i)
      pairs.push_back(store_.train[order[i]]);
    batches.push_back(Batch::from_pairs(std::move(pairs)));
  }
  return batches;
}

std::pair<DenseMatrix, DenseMatrix> Trainer::infer() const {
  return infer_embeddings(cfg_, params_, adj_, social_);
}

double Trainer::monitored_metric() const {
  auto [U, V] = infer();
  InteractionStore view = store_;
  if (cfg_.use_validation) view.test = store_.validation;
  EvalReport report = evaluate(U, V, view, nullptr, cfg_.eval_cutoffs,
                               cfg_.threads);
  for (std::size_t ci = 0; ci < report.cutoffs.size(); ++ci)
    if (report.cutoffs[ci] == cfg_.monitor_cutoff) return report.ndcg[ci];
  throw ConfigError("monitor cutoff missing from eval cutoffs");
}

Checkpoint Trainer::snapshot() const {
  Checkpoint c;
  c.config = cfg_;
  c.params = params_;
  c.descent = descent_;
  c.ascent = ascent_;
  c.epoch = epoch_;
  c.global_step = global_step_;
  c.best_metric = best_metric_;
  c.best_epoch = best_epoch_;
  return c;
}

std::string Trainer::loss_log_header() const {
  std::ostringstream h;
  h << "step";
  for (std::size_t k = 1; k <= cfg_.effective_k(); ++k) h << ",loss_env_" << k;
  h << ",mean,variance,total";
  return h.str();
}

TrainResult Trainer::run(const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  TrainResult result;
  result.loss_log.push_back(loss_log_header());
  {
    std::ostringstream h;
    h << "epoch";
    for (std::size_t n : cfg_.eval_cutoffs) h << ",recall_at_" << n;
    for (std::size_t n : cfg_.eval_cutoffs) h << ",ndcg_at_" << n;
    h << ",monitored,best";
    result.eval_log.push_back(h.str());
  }
  std::vector<std::string> timing_log;
  Checkpoint best = initial_best_ ? *initial_best_ : snapshot();
  bool have_best = initial_best_.has_value();
  const std::size_t start_epoch = epoch_;

  const auto persist = [&](const Checkpoint& last) {
    if (out_dir.empty()) return;
    write_lines(out_dir + "/train_log.csv", result.loss_log);
    write_lines(out_dir + "/eval_history.csv", result.eval_log);
    save_checkpoint(out_dir + "/checkpoint_best", have_best ? best : last);
    save_checkpoint(out_dir + "/checkpoint_last", last);
    if (cfg_.timing) write_lines(out_dir + "/timing.txt", timing_log);
  };

  try {
    for (; epoch_ < cfg_.max_epochs; ++epoch_) {
      const auto t0 = std::chrono::steady_clock::now();
      for (const Batch& batch : make_epoch_batches(epoch_)) {
        const std::uint64_t step = global_step_;
        LossBreakdown b = train_step(batch);
        std::ostringstream line;
        line << step;
        for (double l : b.per_env) line << ',' << fmt_double(l);
        line << ',' << fmt_double(b.mean) << ',' << fmt_double(b.variance)
             << ',' << fmt_double(b.total);
        result.loss_log.push_back(line.str());
      }

      auto [U, V] = infer();
      InteractionStore view = store_;
      if (cfg_.use_validation) view.test = store_.validation;
      EvalReport report =
          evaluate(U, V, view, nullptr, cfg_.eval_cutoffs, cfg_.threads);
      double monitored = 0.0;
      for (std::size_t ci = 0; ci < report.cutoffs.size(); ++ci)
        if (report.cutoffs[ci] == cfg_.monitor_cutoff)
          monitored = report.ndcg[ci];

      const bool improved = monitored > best_metric_;
      if (improved) {
        best_metric_ = monitored;
        best_epoch_ = epoch_;
      }
      std::ostringstream line;
      line << epoch_;
      for (double r : report.recall) line << ',' << fmt_double(r);
      for (double n : report.ndcg) line << ',' << fmt_double(n);
      line << ',' << fmt_double(monitored) << ','
           << fmt_double(best_metric_);
      result.eval_log.push_back(line.str());
      if (cfg_.timing) {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        timing_log.push_back(std::to_string(epoch_) + " " +
                             std::to_string(ms) + "ms");
      }
      if (improved) {
        best = snapshot();
        best.epoch = epoch_ + 1;
        have_best = true;
      } else if (epoch_ - best_epoch_ >= cfg_.patience) {
        ++epoch_;
        break;
      }
    }
  } catch (const NumericalError&) {
    persist(snapshot());
    throw;
  }

  result.epochs_run = epoch_ - start_epoch;
  result.best = have_best ? best : snapshot();
  result.last = snapshot();
  persist(result.last);
  return result;
}

}  // namespace sgil
