#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "sgil/errors.hpp"
#include "sgil/objectives.hpp"
#include "sgil/rng.hpp"
#include "support.hpp"

using namespace sgil;

namespace {

DenseMatrix randm(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "obj_test", 0);
  return DenseMatrix::randn(r, c, 0.8, rng);
}

// Straight-line reimplementation of the in-batch softmax loss.
double softmax_loss_oracle(const DenseMatrix& P, const DenseMatrix& Q,
                           const Batch& batch, double tau) {
  double total = 0.0;
  for (std::size_t b = 0; b < batch.pairs.size(); ++b) {
    const std::size_t user = batch.pairs[b].first;
    std::vector<double> scores;
    for (std::size_t cand : batch.candidate_items) {
      double dot = 0.0, np = 0.0, nq = 0.0;
      for (std::size_t c = 0; c < P.cols(); ++c) {
        dot += P(user, c) * Q(cand, c);
        np += P(user, c) * P(user, c);
        nq += Q(cand, c) * Q(cand, c);
      }
      scores.push_back(dot / (std::sqrt(np) * std::sqrt(nq) * tau));
    }
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double lse = 0.0;
    for (double s : scores) lse += std::exp(s - mx);
    lse = mx + std::log(lse);
    total += lse - scores[batch.targets[b]];
  }
  return total / static_cast<double>(batch.pairs.size());
}

}  // namespace

TEST_CASE("batch construction dedupes candidates and aims targets") {
  Batch b = Batch::from_pairs({{0, 5}, {1, 3}, {2, 5}, {3, 9}});
  CHECK(b.candidate_items == std::vector<std::size_t>{3, 5, 9});
  CHECK(b.targets == std::vector<std::size_t>{1, 0, 1, 2});
}

TEST_CASE("single-pair batch has zero loss") {
  Batch b = Batch::from_pairs({{0, 2}});
  DenseMatrix P = randm(2, 4, 1), Q = randm(3, 4, 2);
  CHECK(erm_softmax_loss(P, Q, b, 0.2) == 0.0);
}

TEST_CASE("equal scores give ln K") {
  // Two candidates with identical item embeddings: every score ties.
  DenseMatrix P = randm(2, 4, 3);
  DenseMatrix Q(2, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    Q(0, c) = 0.3 * (c + 1);
    Q(1, c) = 0.3 * (c + 1);
  }
  Batch b = Batch::from_pairs({{0, 0}, {1, 1}});
  CHECK(erm_softmax_loss(P, Q, b, 0.2) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax loss matches the direct oracle and its tape twin") {
  DenseMatrix P = randm(6, 5, 4), Q = randm(8, 5, 5);
  Batch b = Batch::from_pairs({{0, 1}, {2, 4}, {3, 1}, {5, 7}, {1, 0}});
  const double direct = softmax_loss_oracle(P, Q, b, 0.2);
  CHECK(erm_softmax_loss(P, Q, b, 0.2) ==
        doctest::Approx(direct).epsilon(1e-12));

  Tape t;
  auto p = t.leaf(P, "P");
  auto q = t.leaf(Q, "Q");
  auto loss = erm_softmax_loss_tape(t, p, q, b, 0.2);
  CHECK(t.value(loss).as_scalar() == doctest::Approx(direct).epsilon(1e-12));

  auto res = test::check_gradients(
      {P, Q}, [&b](Tape& tt, const std::vector<Tape::NodeId>& v) {
        return erm_softmax_loss_tape(tt, v[0], v[1], b, 0.2);
      });
  INFO("worst at ", res.worst_at);
  CHECK(res.worst_rel < 1e-4);
}

TEST_CASE("bpr loss gives ln 2 on tied scores and matches a hand oracle") {
  DenseMatrix P(1, 2), Q(2, 2), Z(1, 1);
  P(0, 0) = 0.4;
  P(0, 1) = -0.2;
  Q(0, 0) = 0.4;
  Q(0, 1) = -0.2;
  Q(1, 0) = 0.4;
  Q(1, 1) = -0.2;
  std::vector<std::array<std::size_t, 3>> triples = {{0, 0, 1}};
  CHECK(bpr_loss(P, Q, triples, 0.0, Z, Z) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Q(1, 0) = -0.1;
  Q(1, 1) = 0.3;
  const double pos = P(0, 0) * Q(0, 0) + P(0, 1) * Q(0, 1);
  const double neg = P(0, 0) * Q(1, 0) + P(0, 1) * Q(1, 1);
  const double expect = -std::log(1.0 / (1.0 + std::exp(-(pos - neg))));
  CHECK(bpr_loss(P, Q, triples, 0.0, Z, Z) ==
        doctest::Approx(expect).epsilon(1e-12));

  DenseMatrix P0(1, 2);
  P0(0, 0) = 2.0;
  P0(0, 1) = 1.0;
  CHECK(bpr_loss(P, Q, triples, 0.1, P0, Z) ==
        doctest::Approx(expect + 0.1 * 5.0).epsilon(1e-12));
}

TEST_CASE("invariance objective arithmetic on the 0/1 example") {
  LossBreakdown b = invariance_objective({0.0, 1.0}, 0.15);
  CHECK(b.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b.variance == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b.total == doctest::Approx(0.5375).epsilon(1e-15));
  LossBreakdown one = invariance_objective({0.7}, 0.15);
  CHECK(one.variance == 0.0);
  CHECK(one.total == 0.7);
  LossBreakdown same = invariance_objective({0.4, 0.4, 0.4}, 0.2);
  CHECK(same.variance == 0.0);
}

TEST_CASE("total objective gradient w.r.t. per-env losses is 1/K + 2 beta (L_k - mean)/K") {
  const double beta = 0.15;
  std::vector<DenseMatrix> leaves = {DenseMatrix::scalar(0.3),
                                     DenseMatrix::scalar(0.9),
                                     DenseMatrix::scalar(0.5)};
  Tape t;
  std::vector<Tape::NodeId> ids;
  for (const auto& l : leaves) ids.push_back(t.leaf(l, "L"));
  auto mean = t.mean_of(ids);
  auto var = t.variance_of(ids);
  auto total = t.add_scaled(mean, var, beta);
  t.backward(total);
  const double m = (0.3 + 0.9 + 0.5) / 3.0;
  const double K = 3.0;
  const double ls[3] = {0.3, 0.9, 0.5};
  for (int k = 0; k < 3; ++k) {
    const double expect = 1.0 / K + 2.0 * beta * (ls[k] - m) / K;
    CHECK(t.grad(ids[k]).as_scalar() ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("hsic matches a dense centering-matrix oracle") {
  for (std::size_t n = 2; n <= 8; ++n) {
    DenseMatrix X = randm(n, 3, 100 + n), Y = randm(n, 2, 200 + n);
    const double sigma = 1.3;
    const double got = hsic_rbf(X, Y, sigma);

    auto rbf = [sigma](const DenseMatrix& A, std::size_t i, std::size_t j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < A.cols(); ++c) {
        const double diff = A(i, c) - A(j, c);
        d2 += diff * diff;
      }
      return std::exp(-d2 / (2.0 * sigma * sigma));
    };
    DenseMatrix Kx(n, n), Ky(n, n), H(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Kx(i, j) = rbf(X, i, j);
        Ky(i, j) = rbf(Y, i, j);
        H(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
      }
    DenseMatrix KxH = DenseMatrix::matmul(Kx, H);
    DenseMatrix KyH = DenseMatrix::matmul(Ky, H);
    DenseMatrix prod = DenseMatrix::matmul(KxH, KyH);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += prod(i, i);
    const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
    CHECK(std::fabs(got - trace / denom) < 1e-10);
    CHECK(got >= -1e-15);
    CHECK(hsic_rbf(Y, X, sigma) == doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("hsic of a constant sample is exactly zero") {
  DenseMatrix X = DenseMatrix::filled(5, 3, 0.42);
  DenseMatrix Y = randm(5, 2, 33);
  CHECK(hsic_rbf(X, Y, 1.0) == 0.0);
  CHECK_THROWS_AS(hsic_rbf(DenseMatrix(1, 2), DenseMatrix(1, 2), 1.0),
                  ConfigError);
  CHECK_THROWS_AS(hsic_rbf(X, Y, 0.0), ConfigError);
}

TEST_CASE("rule-based filter keeps pairs above the jaccard threshold") {
  InteractionStore store;
  store.num_users = 4;
  store.num_items = 6;
  store.train = {{0, 0}, {0, 1}, {0, 2},
                 {1, 1}, {1, 2}, {1, 3},
                 {2, 5}};
  store.rebuild_degrees();
  SocialGraph social;
  social.num_users = 4;
  social.edges = {{0, 1}, {0, 2}, {1, 0}, {2, 3}, {3, 2}};

  // J(0,1) = |{1,2}| / |{0,1,2,3}| = 0.5; J(0,2) = 0; J(2,3) = 0/... empty -> 0
  SocialGraph kept = rule_based_filter(social, store, 0.4);
  CHECK(kept.edges == std::vector<IdPair>{{0, 1}, {1, 0}});
  SocialGraph all = rule_based_filter(social, store, 0.0);
  CHECK(all.edges.size() == 5);
}

TEST_CASE("density ratio equals C e^f for log-odds scores") {
  for (double f = -8.0; f <= 8.0; f += 0.5) {
    const double got = density_ratio(f, 1.7);
    const double expect = 1.7 * std::exp(f);
    CHECK(std::fabs(got - expect) / expect < 1e-12);
  }
}
