#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "srplr/autograd.hpp"
#include "srplr/rng.hpp"
#include "srplr/special.hpp"
#include "test_util.hpp"

using namespace srplr;
using namespace srplr::ag;
using srplr::testutil::fill_normal;
using srplr::testutil::fill_uniform;
using srplr::testutil::grad_check;

namespace {

// Builds a scalar from an arbitrary op chain and checks its gradient
// against central differences for every entry of every parameter.
double check_scalar_fn(std::vector<Parameter*> params, const std::function<Var(Tape&)>& build) {
  auto forward_value = [&]() {
    Tape t(false);
    return build(t);
  };
  auto value_of = [&]() {
    Tape t(false);
    Var out = build(t);
    return t.val(out)(0, 0);
  };
  auto forward_backward = [&]() {
    Tape t(true);
    Var out = build(t);
    t.backward(out);
  };
  (void)forward_value;
  return grad_check(std::move(params), value_of, forward_backward);
}

}  // namespace

TEST_CASE("elementwise ops forward values") {
  Tape t;
  Mat m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  Var a = t.constant(m);
  CHECK(t.val(add(a, a))(1, 1) == doctest::Approx(8.0));
  CHECK(t.val(mul(a, a))(1, 0) == doctest::Approx(9.0));
  CHECK(t.val(reciprocal(a))(0, 1) == doctest::Approx(0.5));
  CHECK(t.val(ag::log(ag::exp(a)))(0, 0) == doctest::Approx(1.0));
  CHECK(t.val(clamp(a, 1.5, 3.5))(0, 0) == doctest::Approx(1.5));
  CHECK(t.val(clamp(a, 1.5, 3.5))(1, 1) == doctest::Approx(3.5));
}

TEST_CASE("matmul and bias gradients") {
  Rng rng(1);
  ParameterStore store;
  Parameter& w = store.create("w", 3, 4);
  Parameter& b = store.create("b", 1, 4);
  fill_normal(w.value, rng);
  fill_normal(b.value, rng);
  Mat x(5, 3);
  fill_normal(x, rng);

  const double worst = check_scalar_fn({&w, &b}, [&](Tape& t) {
    Var xv = t.constant(x);
    Var out = add_row(matmul(xv, t.leaf(w)), t.leaf(b));
    return mean_all(mul(out, out));
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("nonlinearity gradients") {
  Rng rng(2);
  ParameterStore store;
  Parameter& w = store.create("w", 4, 4);
  fill_normal(w.value, rng, 0.5);

  for (auto kind : {0, 1, 2, 3, 4, 5}) {
    const double worst = check_scalar_fn({&w}, [&, kind](Tape& t) {
      Var v = t.leaf(w);
      switch (kind) {
        case 0: v = sigmoid(v); break;
        case 1: v = ag::tanh(v); break;
        case 2: v = softplus(v); break;
        case 3: v = relu(add_scalar(v, 0.1)); break;
        case 4: v = log_sigmoid(v); break;
        default: v = ag::exp(v); break;
      }
      return mean_all(mul(v, v));
    });
    CHECK_MESSAGE(worst < 1e-5, "kind ", kind);
  }
}

TEST_CASE("lgamma and digamma gradients on positive domain") {
  Rng rng(3);
  ParameterStore store;
  Parameter& w = store.create("w", 3, 3);
  fill_uniform(w.value, rng, 0.3, 6.0);

  const double worst = check_scalar_fn({&w}, [&](Tape& t) {
    Var v = t.leaf(w);
    return mean_all(add(lgamma(v), digamma(v)));
  });
  CHECK(worst < 1e-5);
}

TEST_CASE("softmax rows: values and gradients") {
  Tape t;
  Mat m(2, 3);
  m << 1.0, 1.0, 1.0, 0.0, 100.0, 0.0;
  Var s = row_softmax(t.constant(m));
  CHECK(t.val(s)(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(t.val(s)(1, 1) == doctest::Approx(1.0));
  CHECK(t.val(s).row(0).sum() == doctest::Approx(1.0));

  Rng rng(4);
  ParameterStore store;
  Parameter& w = store.create("w", 4, 5);
  fill_normal(w.value, rng);
  const double worst = check_scalar_fn({&w}, [&](Tape& tape) {
    Var sm = row_softmax(tape.leaf(w));
    Mat probe(4, 5);
    Rng prng(9);
    fill_normal(probe, prng);
    return mean_all(mul(sm, tape.constant(probe)));
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("block column softmax with mask") {
  // 2 blocks of 3 rows; middle row of second block masked out.
  Mat logits(6, 2);
  logits << 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 2.0, 0.0, 9.0, 9.0, 2.0, 0.0;
  Eigen::VectorXd keep(6);
  keep << 1, 1, 1, 1, 0, 1;
  Tape t;
  Var w = block_col_softmax(t.constant(logits), 3, keep);
  const Mat& W = t.val(w);
  CHECK(W(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(W(4, 0) == doctest::Approx(0.0));
  CHECK(W(3, 0) == doctest::Approx(0.5));
  CHECK((W(3, 1) + W(5, 1)) == doctest::Approx(1.0));

  Rng rng(5);
  ParameterStore store;
  Parameter& p = store.create("p", 6, 2);
  fill_normal(p.value, rng);
  Mat probe(6, 2);
  fill_normal(probe, rng);
  const double worst = check_scalar_fn({&p}, [&](Tape& tape) {
    Var sm = block_col_softmax(tape.leaf(p), 3, keep);
    return mean_all(mul(sm, tape.constant(probe)));
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("gather, concat, slice and block sums") {
  Rng rng(6);
  ParameterStore store;
  Parameter& tab = store.create("tab", 7, 3);
  fill_normal(tab.value, rng);
  Mat probe(4, 6);
  fill_normal(probe, rng);

  const double worst = check_scalar_fn({&tab}, [&](Tape& t) {
    Var g = gather_rows(t.leaf(tab), {0, 3, 3, 6});
    Var c = concat_cols(g, g);
    Var s = slice_cols(c, 1, 4);
    Var padded = concat_cols(s, slice_cols(c, 0, 2));
    Var scored = mul(padded, t.constant(probe));
    Var blocks = block_sum_rows(scored, 2);
    return mean_all(blocks);
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("batched block matmuls match per-block Eigen products") {
  Rng rng(7);
  const int T = 4, B = 3, H = 2;
  Mat q(B * T, H), k(B * T, H);
  fill_normal(q, rng);
  fill_normal(k, rng);
  Tape t;
  Var s = bmm_nt(t.constant(q), t.constant(k), T);
  for (int b = 0; b < B; ++b) {
    Mat expect = q.middleRows(b * T, T) * k.middleRows(b * T, T).transpose();
    CHECK((t.val(s).middleRows(b * T, T) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  ParameterStore store;
  Parameter& qp = store.create("q", B * T, H);
  Parameter& kp = store.create("k", B * T, H);
  fill_normal(qp.value, rng);
  fill_normal(kp.value, rng);
  Mat probe(B * T, H);
  fill_normal(probe, rng);
  const double worst = check_scalar_fn({&qp, &kp}, [&](Tape& tape) {
    Var att = row_softmax(bmm_nt(tape.leaf(qp), tape.leaf(kp), T));
    Var out = bmm_nn(att, tape.leaf(kp), T);
    return mean_all(mul(out, tape.constant(probe)));
  });
  CHECK(worst < 1e-5);
}

TEST_CASE("layer norm matches manual normalization and its gradient") {
  Rng rng(8);
  ParameterStore store;
  Parameter& x = store.create("x", 5, 6);
  Parameter& g = store.create("g", 1, 6);
  Parameter& b = store.create("b", 1, 6);
  fill_normal(x.value, rng);
  g.value.setOnes();
  fill_normal(b.value, rng, 0.1);

  {
    Tape t;
    Var out = layer_norm(t.leaf(x), t.leaf(g), t.leaf(b), 1e-12);
    const Mat& v = t.val(out);
    for (int i = 0; i < 5; ++i) {
      const double m = x.value.row(i).mean();
      const double var = (x.value.row(i).array() - m).square().mean();
      const double expect0 = (x.value(i, 0) - m) / std::sqrt(var + 1e-12) + b.value(0, 0);
      CHECK(v(i, 0) == doctest::Approx(expect0));
    }
  }

  Mat probe(5, 6);
  fill_normal(probe, rng);
  const double worst = check_scalar_fn({&x, &g, &b}, [&](Tape& t) {
    Var out = layer_norm(t.leaf(x), t.leaf(g), t.leaf(b), 1e-6);
    return mean_all(mul(out, t.constant(probe)));
  });
  CHECK(worst < 1e-4);
}

TEST_CASE("bce with logits: uniform-score anchor and gradient") {
  // All-zero scores over 4 items: loss = 4 ln 2.
  Tape t;
  Mat zeros = Mat::Zero(1, 4);
  Var loss = bce_logits_rowsum(t.constant(zeros), {2}, 1e-8);
  CHECK(t.val(loss)(0, 0) == doctest::Approx(4.0 * std::log(2.0)));

  Rng rng(9);
  ParameterStore store;
  Parameter& s = store.create("s", 3, 5);
  fill_normal(s.value, rng, 2.0);
  const double worst = check_scalar_fn({&s}, [&](Tape& tape) {
    return mean_all(bce_logits_rowsum(tape.leaf(s), {0, 2, 4}, 1e-8));
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("softmax cross entropy rows gradient") {
  Rng rng(10);
  ParameterStore store;
  Parameter& s = store.create("s", 3, 5);
  fill_normal(s.value, rng, 1.5);
  const double worst = check_scalar_fn({&s}, [&](Tape& tape) {
    return mean_all(softmax_xent_rows(tape.leaf(s), {1, 0, 3}));
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("clamp blocks gradient outside range") {
  ParameterStore store;
  Parameter& p = store.create("p", 1, 3);
  p.value << -1.0, 0.5, 2.0;
  Tape t;
  Var out = sum_all(clamp(t.leaf(p), 0.0, 1.0));
  t.backward(out);
  CHECK(p.grad(0, 0) == doctest::Approx(0.0));
  CHECK(p.grad(0, 1) == doctest::Approx(1.0));
  CHECK(p.grad(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("backward accumulates into shared subexpressions") {
  ParameterStore store;
  Parameter& p = store.create("p", 1, 1);
  p.value(0, 0) = 3.0;
  Tape t;
  Var x = t.leaf(p);
  Var y = mul(x, x);          // x^2
  Var z = add(y, mul(y, x));  // x^2 + x^3
  t.backward(sum_all(z));
  CHECK(p.grad(0, 0) == doctest::Approx(2.0 * 3.0 + 3.0 * 9.0));
}

TEST_CASE("grad-disabled tape records values only") {
  ParameterStore store;
  Parameter& p = store.create("p", 2, 2);
  p.value.setConstant(2.0);
  Tape t(false);
  Var v = mul(t.leaf(p), t.leaf(p));
  CHECK(t.val(v)(0, 0) == doctest::Approx(4.0));
  CHECK_FALSE(t.needs_grad(v));
  CHECK_THROWS(t.backward(sum_all(v)));
}
