#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "densea/common.hpp"
#include "densea/gradcheck.hpp"
#include "densea/lstm.hpp"
#include "densea/matrix.hpp"
#include "densea/tape.hpp"

using namespace densea;

namespace {

// numeric d(f)/d(x[i]) by central difference over a rebuilt graph
double fd(const std::function<double(const std::vector<double>&)>& f,
          std::vector<double> x, size_t i, double h = 1e-6) {
  x[i] += h;
  double fp = f(x);
  x[i] -= 2 * h;
  double fm = f(x);
  return (fp - fm) / (2 * h);
}

}  // namespace

TEST_CASE("elementwise ops: values and gradients match closed forms") {
  Tape t;
  NodeId a = t.leaf(0.7), b = t.leaf(-1.3);
  NodeId s = t.add(t.mul(a, b), t.div(a, b));       // a*b + a/b
  NodeId r = t.add(t.exp(t.mul_c(s, 0.5)), t.tanh(b));
  t.backward(r);

  double av = 0.7, bv = -1.3;
  double sv = av * bv + av / bv;
  CHECK(t.val(r) == doctest::Approx(std::exp(0.5 * sv) + std::tanh(bv)).epsilon(1e-12));
  // d r/d a = exp(s/2) * 0.5 * (b + 1/b)
  double dra = std::exp(0.5 * sv) * 0.5 * (bv + 1.0 / bv);
  CHECK(t.grad(a) == doctest::Approx(dra).epsilon(1e-10));
  double drb = std::exp(0.5 * sv) * 0.5 * (av - av / (bv * bv)) + (1 - std::tanh(bv) * std::tanh(bv));
  CHECK(t.grad(b) == doctest::Approx(drb).epsilon(1e-10));
}

TEST_CASE("sigmoid and softplus derivatives agree with finite differences") {
  for (double x0 : {-30.0, -3.0, -0.2, 0.0, 1.7, 30.0}) {
    auto f_sig = [](const std::vector<double>& x) {
      Tape t;
      return t.val(t.sigmoid(t.leaf(x[0])));
    };
    auto f_sp = [](const std::vector<double>& x) {
      Tape t;
      return t.val(t.softplus(t.leaf(x[0])));
    };
    Tape t;
    NodeId a = t.leaf(x0);
    NodeId y = t.sigmoid(a);
    t.backward(y);
    CHECK(t.grad(a) == doctest::Approx(fd(f_sig, {x0}, 0)).epsilon(1e-6));

    Tape t2;
    NodeId a2 = t2.leaf(x0);
    NodeId y2 = t2.softplus(a2);
    t2.backward(y2);
    CHECK(t2.grad(a2) == doctest::Approx(fd(f_sp, {x0}, 0)).epsilon(1e-6));
  }
}

TEST_CASE("log_clamp floors the value, zeroes the clamped gradient, and counts events") {
  Tape t;
  NodeId lo = t.leaf(1e-15), ok = t.leaf(0.5);
  NodeId l1 = t.log_clamp(lo);
  NodeId l2 = t.log_clamp(ok);
  NodeId root = t.add(l1, l2);
  t.backward(root);
  CHECK(t.val(l1) == doctest::Approx(std::log(1e-12)));
  CHECK(t.val(l2) == doctest::Approx(std::log(0.5)));
  CHECK(t.grad(lo) == 0.0);
  CHECK(t.grad(ok) == doctest::Approx(2.0));
  CHECK(t.clamp_events() == 1);
}

TEST_CASE("fused dot gradient: strided, and correct when both sides alias") {
  Rng rng(3);
  std::vector<double> av(12), bv(12);
  for (int i = 0; i < 12; ++i) {
    av[i] = rng.normal();
    bv[i] = rng.normal();
  }
  Tape t;
  NodeId a = t.leaf_block(av);
  NodeId b = t.leaf_block(bv);
  NodeId d = t.dot(a, 3, b, 2, 4);  // a[0],a[3],a[6],a[9] . b[0],b[2],b[4],b[6]
  t.backward(d);
  double want = 0;
  for (int i = 0; i < 4; ++i) want += av[3 * i] * bv[2 * i];
  CHECK(t.val(d) == doctest::Approx(want).epsilon(1e-12));
  for (int i = 0; i < 4; ++i) {
    CHECK(t.grad(a + 3 * i) == doctest::Approx(bv[2 * i]).epsilon(1e-12));
    CHECK(t.grad(b + 2 * i) == doctest::Approx(av[3 * i]).epsilon(1e-12));
  }
  CHECK(t.grad(a + 1) == 0.0);

  Tape t2;
  NodeId x = t2.leaf_block(av.data(), 5);
  NodeId sq = t2.dot(x, 1, x, 1, 5);  // |x|^2, self-aliased
  t2.backward(sq);
  for (int i = 0; i < 5; ++i)
    CHECK(t2.grad(x + i) == doctest::Approx(2 * av[i]).epsilon(1e-12));
}

TEST_CASE("sum_block and wsum gradients") {
  std::vector<double> v{0.5, -1.0, 2.0, 3.0};
  double w[4] = {1.0, -2.0, 0.5, 0.0};
  Tape t;
  NodeId a = t.leaf_block(v);
  NodeId s = t.sum_block(a, 4);
  NodeId ws = t.wsum(a, 4, w);
  NodeId root = t.add(t.mul_c(s, 2.0), ws);
  t.backward(root);
  CHECK(t.val(s) == doctest::Approx(4.5));
  CHECK(t.val(ws) == doctest::Approx(3.5));
  for (int i = 0; i < 4; ++i) CHECK(t.grad(a + i) == doctest::Approx(2.0 + w[i]));
}

TEST_CASE("non-finite forward values raise NumericError at the offending op") {
  Tape t;
  NodeId big = t.leaf(1000.0);
  CHECK_THROWS_AS(t.exp(big), NumericError);
  NodeId z = t.leaf(0.0), one = t.leaf(1.0);
  CHECK_THROWS_AS(t.div(one, z), NumericError);
}

TEST_CASE("backward twice without reset is rejected; reset clears everything") {
  Tape t;
  NodeId a = t.leaf(2.0);
  NodeId y = t.mul(a, a);
  t.backward(y);
  CHECK_THROWS_AS(t.backward(y), InternalError);
  t.reset();
  CHECK(t.size() == 0);
  NodeId b = t.leaf(3.0);
  NodeId y2 = t.mul(b, b);
  t.backward(y2);
  CHECK(t.grad(b) == doctest::Approx(6.0));
}

TEST_CASE("matmul matches a plain triple loop") {
  Rng rng(5);
  std::vector<double> av(6), bv(8);
  for (auto& x : av) x = rng.normal();
  for (auto& x : bv) x = rng.normal();
  Tape t;
  Mat A = make_leaf_mat(t, av.data(), 2, 3);
  Mat B = make_leaf_mat(t, bv.data(), 3, 2);  // uses 6 of the 8
  Mat C = matmul(t, A, B);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      double want = 0;
      for (int k = 0; k < 3; ++k) want += av[r * 3 + k] * bv[k * 2 + c];
      CHECK(t.val(C.id(r, c)) == doctest::Approx(want).epsilon(1e-12));
    }
  CHECK_THROWS_AS(matmul(t, A, A), DimensionError);
}

TEST_CASE("softmax_row: simplex output, shift invariance, gradient vs fd") {
  std::vector<double> logits{1.5, -0.5, 3.0, 0.0};
  Tape t;
  Mat v = make_leaf_mat(t, logits.data(), 1, 4);
  Mat p = softmax_row(t, v);
  double total = 0;
  for (int i = 0; i < 4; ++i) {
    CHECK(t.val(p.id(i)) > 0.0);
    total += t.val(p.id(i));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

  // shift invariance
  std::vector<double> shifted = logits;
  for (double& x : shifted) x += 100.0;
  Tape t2;
  Mat p2 = softmax_row(t2, make_leaf_mat(t2, shifted.data(), 1, 4));
  for (int i = 0; i < 4; ++i)
    CHECK(t2.val(p2.id(i)) == doctest::Approx(t.val(p.id(i))).epsilon(1e-12));

  // gradient of p[2] wrt logits vs finite difference
  Tape t3;
  Mat v3 = make_leaf_mat(t3, logits.data(), 1, 4);
  Mat p3 = softmax_row(t3, v3);
  t3.backward(p3.id(2));
  auto f = [](const std::vector<double>& x) {
    Tape tt;
    Mat pp = softmax_row(tt, make_leaf_mat(tt, x.data(), 1, 4));
    return tt.val(pp.id(2));
  };
  for (size_t i = 0; i < 4; ++i)
    CHECK(t3.grad(v3.id(static_cast<int>(i))) == doctest::Approx(fd(f, logits, i)).epsilon(1e-6));
}

TEST_CASE("cross entropies match closed forms") {
  std::vector<double> p{0.1, 0.2, 0.7};
  Tape t;
  Mat d = make_leaf_mat(t, p.data(), 1, 3);
  CHECK(t.val(cross_entropy(t, d, 2)) == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
  double q[3] = {0.5, 0.25, 0.25};
  double want = -(0.5 * std::log(0.1) + 0.25 * std::log(0.2) + 0.25 * std::log(0.7));
  CHECK(t.val(soft_cross_entropy(t, d, q)) == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(t, d, 3), IndexError);
}

TEST_CASE("lstm_step agrees with an independent plain-double implementation") {
  const int in = 3, h = 4;
  Rng rng(17);
  std::vector<double> Wx(4 * h * in), Wh(4 * h * h), b(4 * h), x(in), h0(h), c0(h);
  for (auto v : {&Wx, &Wh, &b, &x, &h0, &c0})
    for (double& e : *v) e = rng.normal(0.0, 0.6);

  // oracle: textbook gate equations, same [i f g o] row order
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  std::vector<double> z(4 * h), oh(h), oc(h);
  for (int j = 0; j < 4 * h; ++j) {
    double acc = b[j];
    for (int k = 0; k < in; ++k) acc += Wx[j * in + k] * x[k];
    for (int k = 0; k < h; ++k) acc += Wh[j * h + k] * h0[k];
    z[j] = acc;
  }
  for (int j = 0; j < h; ++j) {
    double ig = sig(z[j]), fg = sig(z[h + j]), gg = std::tanh(z[2 * h + j]), og = sig(z[3 * h + j]);
    oc[j] = fg * c0[j] + ig * gg;
    oh[j] = og * std::tanh(oc[j]);
  }

  Tape t;
  LstmRefs refs{make_leaf_mat(t, Wx.data(), 4 * h, in), make_leaf_mat(t, Wh.data(), 4 * h, h),
                make_leaf_mat(t, b.data(), 1, 4 * h)};
  LstmState prev{make_leaf_mat(t, h0.data(), 1, h), make_leaf_mat(t, c0.data(), 1, h)};
  Mat xm = make_leaf_mat(t, x.data(), 1, in);
  LstmState out = lstm_step(t, xm, prev, refs);
  for (int j = 0; j < h; ++j) {
    CHECK(t.val(out.h.id(j)) == doctest::Approx(oh[j]).epsilon(1e-12));
    CHECK(t.val(out.c.id(j)) == doctest::Approx(oc[j]).epsilon(1e-12));
  }
}

TEST_CASE("binder + grad_check validate a two-layer composite end to end") {
  ParamStore ps;
  Rng rng(23);
  Param& W1 = ps.add("W1", 4, 3);
  Param& b1 = ps.add("b1", 1, 4);
  Param& w2 = ps.add("w2", 1, 4);
  for (auto* p : {&W1, &b1, &w2})
    for (double& v : p->value) v = rng.normal(0.0, 0.8);

  std::vector<double> x{0.3, -1.2, 0.9};
  auto build = [&](Tape& t, Binder& bind) {
    Mat W = bind.bind(ps.at("W1"));
    Mat c = bind.bind(ps.at("b1"));
    Mat v = bind.bind(ps.at("w2"));
    Mat xm = make_leaf_mat(t, x.data(), 1, 3);
    // y = w2 . tanh(W1 x + b1), then softplus to keep it scalar and smooth
    NodeId acts = kNoNode;
    std::vector<NodeId> pre(4);
    for (int j = 0; j < 4; ++j) pre[j] = t.add(t.dot(xm.base, 1, W.id(j, 0), 1, 3), c.id(j));
    for (int j = 0; j < 4; ++j) {
      NodeId a = t.tanh(pre[j]);
      if (j == 0) acts = a;
    }
    return t.softplus(t.dot(acts, 1, v.base, 1, 4));
  };
  GradCheckReport rep = grad_check(ps, build, 1e-5);
  CHECK(rep.n_checked == 4 * 3 + 4 + 4);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("sgd momentum step: clipping and freeze behavior") {
  ParamStore ps;
  Param& w = ps.add("w", 1, 2);
  Param& frozen = ps.add("frozen", 1, 1);
  frozen.trainable = false;
  w.value = {1.0, 1.0};
  frozen.value = {5.0};
  w.grad = {3.0, 4.0};  // norm 5
  frozen.grad = {100.0};

  SgdMomentum opt;
  opt.lr = 0.1;
  opt.momentum = 0.0;
  opt.clip_norm = 1.0;  // scale grads by 1/5
  opt.step(ps);
  CHECK(w.value[0] == doctest::Approx(1.0 - 0.1 * 3.0 / 5.0));
  CHECK(w.value[1] == doctest::Approx(1.0 - 0.1 * 4.0 / 5.0));
  CHECK(frozen.value[0] == 5.0);
  CHECK(w.grad[0] == 0.0);

  // momentum accumulates over two identical steps
  ParamStore ps2;
  Param& u = ps2.add("u", 1, 1);
  u.value = {0.0};
  SgdMomentum opt2;
  opt2.lr = 1.0;
  opt2.momentum = 0.5;
  opt2.clip_norm = 0.0;
  u.grad = {1.0};
  opt2.step(ps2);
  CHECK(u.value[0] == doctest::Approx(-1.0));
  u.grad = {1.0};
  opt2.step(ps2);  // m = 0.5*1 + 1 = 1.5
  CHECK(u.value[0] == doctest::Approx(-2.5));
}

TEST_CASE("concat_rows copies values and routes gradients to both pieces") {
  Tape t;
  std::vector<double> a{1.0, 2.0}, b{3.0};
  Mat am = make_leaf_mat(t, a.data(), 1, 2);
  Mat bm = make_leaf_mat(t, b.data(), 1, 1);
  Mat cat = concat_rows(t, {am, bm});
  CHECK(cat.cols == 3);
  NodeId root = t.dot(cat.base, 1, cat.base, 1, 3);
  t.backward(root);
  CHECK(t.grad(am.id(1)) == doctest::Approx(4.0));
  CHECK(t.grad(bm.id(0)) == doctest::Approx(6.0));
}
