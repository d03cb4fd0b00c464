#include <cmath>
#include <random>

#include "doctest.h"
#include "dquag/adam.hpp"
#include "dquag/autodiff.hpp"
#include "dquag/error.hpp"
#include "gradcheck.hpp"

using namespace dquag;
using namespace dquag::ad;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("matmul by identity") {
  Tape t;
  Matrix a = random_matrix(3, 4, 1);
  auto out = matmul(t.constant(Matrix::Identity(3, 3)), t.constant(a));
  CHECK(out.value() == a);
  CHECK_THROWS_AS(matmul(t.constant(a), t.constant(a)), ShapeMismatch);
}

TEST_CASE("elementwise forwards") {
  Tape t;
  Matrix m(1, 2);
  m << -2, 3;
  auto r = relu(t.constant(m));
  CHECK(r.value()(0, 0) == 0.0);
  CHECK(r.value()(0, 1) == 3.0);
  auto l = leaky_relu(t.constant(m), 0.2);
  CHECK(l.value()(0, 0) == doctest::Approx(-0.4));
  CHECK(sum(t.constant(m)).scalar() == 1.0);
  CHECK(mean(t.constant(m)).scalar() == 0.5);
  CHECK_THROWS_AS(log(t.constant(m)), NonFinite);
  Matrix big(1, 1);
  big << 1000.0;
  CHECK_THROWS_AS(ad::exp(t.constant(big)), NonFinite);
  CHECK_THROWS_AS(add(t.constant(m), t.constant(Matrix::Zero(2, 1))), ShapeMismatch);
}

TEST_CASE("masked softmax") {
  Tape t;
  Matrix logits = Matrix::Constant(1, 3, 0.7);
  Mask mask(1, 3);
  mask << false, true, true;
  auto s = masked_row_softmax(t.constant(logits), mask);
  CHECK(s.value()(0, 0) == 0.0);
  CHECK(s.value()(0, 1) == 0.5);
  CHECK(s.value()(0, 2) == 0.5);
  Matrix wide(2, 3);
  wide << 800, -800, 0, 1, 2, 3;
  Mask all = Mask::Constant(2, 3, true);
  auto w = masked_row_softmax(t.constant(wide), all);
  CHECK(w.value().row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  Mask none = Mask::Constant(1, 3, false);
  CHECK_THROWS_AS(masked_row_softmax(t.constant(logits), none), ShapeMismatch);
}

TEST_CASE("backward basics") {
  Parameter p(random_matrix(2, 3, 2));
  {
    Tape t;
    t.backward(sum(t.parameter(p)));
    CHECK(p.grad == Matrix::Ones(2, 3));
  }
  {
    Tape t;
    t.backward(sum(t.parameter(p)));
    CHECK(p.grad == Matrix::Constant(2, 3, 2.0));
  }
  p.zero_grad();
  {
    Tape t;
    auto v = t.parameter(p);
    t.backward(sum(mul(v, v)));
    CHECK(p.grad.isApprox(2.0 * p.value, 1e-15));
  }
  Tape t;
  CHECK_THROWS_AS(t.backward(t.parameter(p)), NotScalar);
}

TEST_CASE("backward visits each node once") {
  Parameter p(random_matrix(3, 3, 3));
  Tape t;
  auto v = t.parameter(p);
  auto a = relu(v);
  auto b = mul(a, a);
  auto c = add(b, a);
  t.backward(sum(c));
  CHECK(t.backward_visits() == t.size());
}

TEST_CASE("gradient check: three-layer composition") {
  Parameter w1(random_matrix(4, 5, 4)), b1(random_matrix(1, 5, 5)), w2(random_matrix(5, 3, 6)), w3(random_matrix(3, 2, 7));
  const Matrix x = random_matrix(6, 4, 8);
  Mask mask = Mask::Constant(6, 3, true);
  mask(0, 1) = false;
  auto loss = [&](Tape& t) {
    auto h = leaky_relu(add_row(matmul(t.constant(x), t.parameter(w1)), t.parameter(b1)), 0.2);
    auto s = masked_row_softmax(matmul(h, t.parameter(w2)), mask);
    auto o = matmul(s, t.parameter(w3));
    return mean(mul(o, o));
  };
  auto r = testing::grad_check({&w1, &b1, &w2, &w3}, loss);
  CHECK(r.entries == 20 + 5 + 15 + 6);
  CHECK(r.max_rel <= 1e-5);
}

TEST_CASE("gradient check: every primitive") {
  Parameter a(random_matrix(4, 3, 9, 0.5, 1.5)), b(random_matrix(4, 3, 10)), s(random_matrix(4, 1, 11));
  Parameter k(random_matrix(1, 1, 12)), adj(random_matrix(4, 2, 13)), src(random_matrix(4, 1, 14));
  Parameter dst(random_matrix(4, 1, 15));
  Mask mask = Mask::Constant(4, 2, true);
  mask(1, 0) = false;
  auto loss = [&](Tape& t) {
    auto va = t.parameter(a), vb = t.parameter(b);
    auto x = sub(mul(ad::log(va), vb), ad::exp(scale(vb, 0.3)));
    x = add_scalar(mul_rows(x, t.parameter(s)), 0.1);
    x = scale_by(x, t.parameter(k));
    auto wide = concat_cols(relu(x), slice_cols(va, 1, 2));
    auto tall = reshape(slice_rows(wide, 1, 2), 5, 2);
    auto pairs = pairwise_block_add(t.parameter(src), t.parameter(dst), 2);
    auto att = masked_row_softmax(leaky_relu(pairs, 0.2), mask);
    auto mixed = block_matmul(att, t.parameter(adj), 2);
    return add(mean(row_sum(mul(tall, tall))), sum(mul(mixed, mixed)));
  };
  auto r = testing::grad_check({&a, &b, &s, &k, &adj, &src, &dst}, loss);
  CHECK(r.max_rel <= 1e-5);
}

TEST_CASE("adam: zero gradient keeps parameters") {
  Parameter p(random_matrix(2, 2, 16));
  const Matrix before = p.value;
  AdamState st;
  Parameter* ps[] = {&p};
  adam_step(ps, st);
  CHECK(p.value == before);
  CHECK(st.step == 1);
}

TEST_CASE("adam: single step from zero moments") {
  Parameter p(Matrix::Constant(1, 1, 0.5));
  p.grad.setConstant(1.0);
  AdamState st;
  Parameter* ps[] = {&p};
  adam_step(ps, st);
  // m_hat = 1, v_hat = 1 after bias correction.
  const double expected = 0.5 - 0.01 * 1.0 / (1.0 + 1e-8);
  CHECK(p.value(0, 0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(p.value(0, 0) - 0.5 == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: constant gradient descends") {
  Parameter p(Matrix::Zero(1, 2));
  AdamState st;
  Parameter* ps[] = {&p};
  for (int i = 0; i < 100; ++i) {
    p.grad << 0.3, -2.0;
    adam_step(ps, st);
  }
  CHECK(p.value(0, 0) < 0.0);
  CHECK(p.value(0, 1) > 0.0);
  CHECK(st.first_moment[0].rows() == 1);
  CHECK(st.first_moment[0].cols() == 2);
}

TEST_CASE("adam: shape mismatch") {
  Parameter p(Matrix::Zero(1, 2));
  AdamState st;
  Parameter* ps[] = {&p};
  adam_step(ps, st);
  Parameter q(Matrix::Zero(3, 3));
  Parameter* qs[] = {&q};
  CHECK_THROWS_AS(adam_step(qs, st), ShapeMismatch);
}

TEST_CASE("forward determinism") {
  Parameter w(random_matrix(5, 5, 17));
  auto run = [&] {
    Tape t;
    return masked_row_softmax(matmul(t.parameter(w), t.parameter(w)), Mask::Constant(5, 5, true)).value();
  };
  CHECK(run() == run());
}
