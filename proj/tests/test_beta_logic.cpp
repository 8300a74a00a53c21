#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "srplr/beta_logic.hpp"
#include "srplr/errors.hpp"
#include "srplr/rng.hpp"
#include "srplr/special.hpp"
#include "test_util.hpp"

using namespace srplr;
using ag::Mat;
using srplr::testutil::fill_normal;
using srplr::testutil::fill_uniform;

namespace {

BetaEmbedding random_embedding(Rng& rng, int d, double lo, double hi) {
  Eigen::ArrayXd a(d), b(d);
  for (int k = 0; k < d; ++k) {
    a(k) = rng.uniform(lo, hi);
    b(k) = rng.uniform(lo, hi);
  }
  return BetaEmbedding(a, b);
}

AttentionNetParams random_net(Rng& rng, int d) {
  AttentionNetParams net;
  net.w1 = Mat(2 * d, 2 * d);
  net.w2 = Mat(2 * d, d);
  fill_normal(net.w1, rng, 0.3);
  fill_normal(net.w2, rng, 0.3);
  net.b1 = Eigen::RowVectorXd::Zero(2 * d);
  net.b2 = Eigen::RowVectorXd::Zero(d);
  return net;
}

Mat uniform_weights(int n, int d) { return Mat::Constant(n, d, 1.0 / n); }

}  // namespace

TEST_CASE("project_to_beta: clamp floor on zero rows") {
  LogicConfig cfg;
  TransferParams tr{Mat::Identity(4, 4), Mat::Identity(4, 4)};
  Mat rows = Mat::Zero(2, 4);
  auto out = project_to_beta(rows, tr, cfg);
  REQUIRE(out.size() == 2);
  for (const auto& e : out) {
    CHECK((e.alpha == cfg.eps_clamp).all());
    CHECK((e.beta == cfg.eps_clamp).all());
  }
}

TEST_CASE("project_to_beta: forced arithmetic with scaled identity") {
  LogicConfig cfg;
  TransferParams tr{2.0 * Mat::Identity(4, 4), Mat::Identity(4, 4)};
  Mat rows = Mat::Zero(1, 4);
  rows(0, 0) = 1.0;
  auto out = project_to_beta(rows, tr, cfg);
  CHECK(out[0].alpha(0) == doctest::Approx(2.0));
  for (int k = 1; k < 4; ++k) CHECK(out[0].alpha(k) == doctest::Approx(cfg.eps_clamp));
}

TEST_CASE("project_to_beta: clamp ceiling") {
  LogicConfig cfg;
  TransferParams tr{Mat::Identity(2, 2) * 1e12, Mat::Identity(2, 2)};
  Mat rows = Mat::Ones(1, 2);
  auto out = project_to_beta(rows, tr, cfg);
  CHECK(out[0].alpha(0) == 1e9);
}

TEST_CASE("negate: reciprocal anchors") {
  LogicConfig cfg;
  BetaEmbedding v(Eigen::ArrayXd::Constant(3, 2.0), Eigen::ArrayXd::Constant(3, 4.0));
  auto n = negate(v, cfg);
  CHECK(n.alpha(0) == doctest::Approx(0.5));
  CHECK(n.beta(0) == doctest::Approx(0.25));

  BetaEmbedding u(Eigen::ArrayXd::Ones(3), Eigen::ArrayXd::Ones(3));
  auto nu = negate(u, cfg);
  CHECK(nu.alpha(0) == 1.0);
  CHECK(nu.beta(0) == 1.0);
}

TEST_CASE("negate: exact involution on [1e-3, 1e3]") {
  LogicConfig cfg;
  cfg.eps_clamp = 1e-3;  // keep the clamp outside the tested range
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    BetaEmbedding v = random_embedding(rng, 8, 1e-3, 1e3);
    BetaEmbedding nn = negate(negate(v, cfg), cfg);
    for (int k = 0; k < 8; ++k) {
      REQUIRE(nn.alpha(k) == v.alpha(k));
      REQUIRE(nn.beta(k) == v.beta(k));
    }
  }
}

TEST_CASE("negate: clamp accounts for any involution deviation") {
  LogicConfig cfg;  // default floor 0.05
  BetaEmbedding v(Eigen::ArrayXd::Constant(1, 1e-3), Eigen::ArrayXd::Constant(1, 30.0));
  auto n1 = negate(v, cfg);
  CHECK(n1.alpha(0) == doctest::Approx(1000.0));
  CHECK(n1.beta(0) == doctest::Approx(0.05));  // 1/30 clamped up to the floor
  auto n2 = negate(n1, cfg);
  CHECK(n2.alpha(0) == doctest::Approx(0.05));  // 1/1000 clamped: deviation is the clamp
  CHECK(n2.beta(0) == doctest::Approx(20.0));   // reciprocal of the clamped floor
}

TEST_CASE("attention weights: singleton, duplicates, shift invariance") {
  Rng rng(12);
  const int d = 5;
  auto net = random_net(rng, d);
  BetaEmbedding v = random_embedding(rng, d, 0.2, 5.0);

  Mat w1 = attention_weights({v}, net);
  CHECK((w1.array() == 1.0).all());

  Mat w2 = attention_weights({v, v}, net);
  CHECK((w2.array() == 0.5).all());

  // Adding a constant to every participant's logit in one dimension is a
  // no-op; emulate by shifting the output bias of the net.
  BetaEmbedding u = random_embedding(rng, d, 0.2, 5.0);
  Mat before = attention_weights({v, u}, net);
  auto shifted = net;
  shifted.b2(2) += 17.0;
  Mat after = attention_weights({v, u}, shifted);
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);

  for (int j = 0; j < d; ++j) CHECK(before.col(j).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(attention_weights({}, net), ValidationError);
}

TEST_CASE("conjoin: idempotence and weighted average anchor") {
  LogicConfig cfg;
  Rng rng(13);
  const int d = 6;
  BetaEmbedding v = random_embedding(rng, d, 0.1, 50.0);

  for (int n : {1, 2, 5}) {
    std::vector<BetaEmbedding> copies(static_cast<std::size_t>(n), v);
    // arbitrary column-normalized weights
    Mat w(n, d);
    fill_uniform(w, rng, 0.05, 1.0);
    for (int j = 0; j < d; ++j) w.col(j) /= w.col(j).sum();
    BetaEmbedding c = conjoin(copies, w, cfg);
    CHECK((c.alpha - v.alpha).abs().maxCoeff() < 1e-12 * v.alpha.maxCoeff());
    CHECK((c.beta - v.beta).abs().maxCoeff() < 1e-12 * v.beta.maxCoeff());
  }

  BetaEmbedding a(Eigen::ArrayXd::Constant(2, 2.0), Eigen::ArrayXd::Constant(2, 2.0));
  BetaEmbedding b(Eigen::ArrayXd::Constant(2, 4.0), Eigen::ArrayXd::Constant(2, 4.0));
  BetaEmbedding c = conjoin({a, b}, uniform_weights(2, 2), LogicConfig{});
  CHECK(c.alpha(0) == doctest::Approx(3.0));
  CHECK(c.beta(1) == doctest::Approx(3.0));
}

TEST_CASE("conjoin: rejects bad weights") {
  LogicConfig cfg;
  BetaEmbedding v(Eigen::ArrayXd::Ones(2), Eigen::ArrayXd::Ones(2));
  Mat w = Mat::Constant(2, 2, 0.6);  // columns sum to 1.2
  CHECK_THROWS_AS(conjoin({v, v}, w, cfg), ValidationError);
  Mat wneg(2, 2);
  wneg << 1.5, 1.5, -0.5, -0.5;
  CHECK_THROWS_AS(conjoin({v, v}, wneg, cfg), ValidationError);
}

TEST_CASE("conjoin equals normalized weighted product of densities") {
  // d = 1: the geometric mean of Beta densities with column-normalized
  // weights is itself a Beta density with averaged shape parameters.
  LogicConfig cfg;
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.bounded(3));
    std::vector<BetaEmbedding> parts;
    for (int i = 0; i < n; ++i) parts.push_back(random_embedding(rng, 1, 1.0, 10.0));
    Mat w(n, 1);
    for (int i = 0; i < n; ++i) w(i, 0) = rng.uniform(0.05, 1.0);
    w.col(0) /= w.col(0).sum();
    BetaEmbedding c = conjoin(parts, w, cfg);

    const long grid = 10000;
    std::vector<double> wp(static_cast<std::size_t>(grid));
    double mass = 0.0;
    for (long g = 0; g < grid; ++g) {
      const double x = (static_cast<double>(g) + 0.5) / static_cast<double>(grid);
      double logp = 0.0;
      for (int i = 0; i < n; ++i) {
        logp += w(i, 0) * std::log(oracle::beta_pdf(parts[static_cast<std::size_t>(i)].alpha(0),
                                                    parts[static_cast<std::size_t>(i)].beta(0), x));
      }
      wp[static_cast<std::size_t>(g)] = std::exp(logp);
      mass += wp[static_cast<std::size_t>(g)];
    }
    mass /= static_cast<double>(grid);
    double worst = 0.0;
    for (long g = 0; g < grid; ++g) {
      const double x = (static_cast<double>(g) + 0.5) / static_cast<double>(grid);
      const double ref = wp[static_cast<std::size_t>(g)] / mass;
      const double got = oracle::beta_pdf(c.alpha(0), c.beta(0), x);
      worst = std::max(worst, std::abs(ref - got));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("kl_distance: anchors, asymmetry and quadrature agreement") {
  BetaEmbedding u11(Eigen::ArrayXd::Ones(1), Eigen::ArrayXd::Ones(1));
  BetaEmbedding u22(Eigen::ArrayXd::Constant(1, 2.0), Eigen::ArrayXd::Constant(1, 2.0));

  CHECK(kl_distance(u11, u11) < 1e-9);
  CHECK(kl_distance(u22, u22) < 1e-9);
  // target (1,1) against sequence (2,2) and the reverse
  CHECK(kl_distance(u11, u22) == doctest::Approx(0.2082).epsilon(1e-3));
  CHECK(kl_distance(u22, u11) == doctest::Approx(0.1251).epsilon(1e-3));
  CHECK(kl_distance(u11, u22) == doctest::Approx(oracle::kl_beta_quadrature(1, 1, 2, 2)).epsilon(1e-6));
  CHECK(kl_distance(u22, u11) == doctest::Approx(oracle::kl_beta_quadrature(2, 2, 1, 1)).epsilon(1e-6));

  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    BetaEmbedding p = random_embedding(rng, 1, 0.1, 10.0);
    BetaEmbedding q = random_embedding(rng, 1, 0.1, 10.0);
    const double closed = kl_distance(p, q);
    const double quad = oracle::kl_beta_quadrature(p.alpha(0), p.beta(0), q.alpha(0), q.beta(0));
    CHECK(std::abs(closed - quad) < 1e-4);
    CHECK(closed > -1e-9);
  }

  // multi-dimensional distance is the sum over dimensions
  Rng rng2(16);
  BetaEmbedding p = random_embedding(rng2, 4, 0.3, 5.0);
  BetaEmbedding q = random_embedding(rng2, 4, 0.3, 5.0);
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    BetaEmbedding pk(p.alpha.segment(k, 1), p.beta.segment(k, 1));
    BetaEmbedding qk(q.alpha.segment(k, 1), q.beta.segment(k, 1));
    sum += kl_distance(pk, qk);
  }
  CHECK(kl_distance(p, q) == doctest::Approx(sum));
}

TEST_CASE("beta_mean anchors and range") {
  BetaEmbedding u(Eigen::ArrayXd::Ones(2), Eigen::ArrayXd::Ones(2));
  CHECK(beta_mean(u)(0) == doctest::Approx(0.5));
  BetaEmbedding v(Eigen::ArrayXd::Constant(1, 2.0), Eigen::ArrayXd::Constant(1, 6.0));
  CHECK(beta_mean(v)(0) == doctest::Approx(0.25));

  LogicConfig cfg;
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    BetaEmbedding w = random_embedding(rng, 6, cfg.eps_clamp, 1e6);
    auto m = beta_mean(w);
    CHECK((m > 0.0).all());
    CHECK((m < 1.0).all());
  }
}

TEST_CASE("disjoin: De Morgan by construction, identity on singletons") {
  LogicConfig cfg;
  Rng rng(18);
  const int d = 4;
  auto net = random_net(rng, d);

  // single participant comes back unchanged (components inside [1/eps bounds])
  BetaEmbedding v = random_embedding(rng, d, 0.1, 10.0);
  BetaEmbedding dj = disjoin({v}, net, cfg);
  CHECK((dj.alpha - v.alpha).abs().maxCoeff() < 1e-12);
  CHECK((dj.beta - v.beta).abs().maxCoeff() < 1e-12);

  // n copies of v
  BetaEmbedding dj3 = disjoin({v, v, v}, net, cfg);
  CHECK((dj3.alpha - v.alpha).abs().maxCoeff() < 1e-9);

  // bit-exact equality with the explicit composition
  BetaEmbedding u = random_embedding(rng, d, 0.1, 10.0);
  std::vector<BetaEmbedding> negs{negate(v, cfg), negate(u, cfg)};
  BetaEmbedding manual = negate(conjoin(negs, attention_weights(negs, net), cfg), cfg);
  BetaEmbedding via = disjoin({v, u}, net, cfg);
  for (int k = 0; k < d; ++k) {
    CHECK(via.alpha(k) == manual.alpha(k));
    CHECK(via.beta(k) == manual.beta(k));
  }
  CHECK_THROWS_AS(disjoin({}, net, cfg), ValidationError);
}

TEST_CASE("closure: operator outputs stay in the legal range") {
  LogicConfig cfg;
  Rng rng(19);
  const int d = 5;
  auto net = random_net(rng, d);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BetaEmbedding> parts;
    const int n = 1 + static_cast<int>(rng.bounded(4));
    for (int i = 0; i < n; ++i)
      parts.push_back(random_embedding(rng, d, cfg.eps_clamp, 1e8));
    BetaEmbedding c = conjoin(parts, attention_weights(parts, net), cfg);
    BetaEmbedding nn = negate(c, cfg);
    BetaEmbedding dj = disjoin(parts, net, cfg);
    for (const auto* e : {&c, &nn, &dj}) {
      CHECK((e->alpha >= cfg.eps_clamp).all());
      CHECK((e->alpha <= LogicConfig::kClampMax).all());
      CHECK((e->beta >= cfg.eps_clamp).all());
      CHECK((e->beta <= LogicConfig::kClampMax).all());
    }
  }
}

TEST_CASE("tape kl_elementwise matches the value-level closed form") {
  Rng rng(20);
  ag::ParameterStore store;
  auto& a1 = store.create("a1", 3, 4);
  auto& b1 = store.create("b1", 3, 4);
  auto& a2 = store.create("a2", 3, 4);
  auto& b2 = store.create("b2", 3, 4);
  for (auto* p : {&a1, &b1, &a2, &b2}) fill_uniform(p->value, rng, 0.2, 8.0);

  ag::Tape t;
  ag::Var kl = logic_ops::kl_elementwise(t.leaf(a1), t.leaf(b1), t.leaf(a2), t.leaf(b2));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double expect = kl_beta(a1.value(i, j), b1.value(i, j), a2.value(i, j), b2.value(i, j));
      CHECK(t.val(kl)(i, j) == doctest::Approx(expect));
    }
  }

  // gradient against central differences
  const double worst = srplr::testutil::grad_check(
      {&a1, &b1, &a2, &b2},
      [&]() {
        ag::Tape tape(false);
        ag::Var v = logic_ops::kl_elementwise(tape.leaf(a1), tape.leaf(b1), tape.leaf(a2),
                                              tape.leaf(b2));
        return tape.val(ag::mean_all(v))(0, 0);
      },
      [&]() {
        ag::Tape tape(true);
        ag::Var v = logic_ops::kl_elementwise(tape.leaf(a1), tape.leaf(b1), tape.leaf(a2),
                                              tape.leaf(b2));
        tape.backward(ag::mean_all(v));
      });
  CHECK(worst < 1e-3);
}
