#include <cmath>

#include "atlab/graph.hpp"
#include "atlab/kernels.hpp"
#include "atlab/optim.hpp"
#include "atlab/rng.hpp"
#include "atlab/tensor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace atlab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform_float(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tape tape;
  Var out = matmul(tape.leaf(eye), tape.leaf(a));
  CHECK(allclose(out.val(), a));

  Tensor z({2, 3});
  Rng rng(3);
  Tensor b = random_tensor({3, 4}, rng);
  Tape t2;
  Var out2 = matmul(t2.leaf(z), t2.leaf(b));
  CHECK(allclose(out2.val(), Tensor({2, 4})));
}

TEST_CASE("matmul hand-computed product") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {5, 6});
  Tape tape;
  Var out = matmul(tape.leaf(a), tape.leaf(b));
  CHECK(out.val()[0] == doctest::Approx(17));
  CHECK(out.val()[1] == doctest::Approx(39));
}

TEST_CASE("matmul rejects dimension mismatch") {
  Tensor a({2, 3});
  Tensor b({2, 3});
  Tape tape;
  CHECK_THROWS_AS(matmul(tape.leaf(a), tape.leaf(b)), ShapeError);
}

TEST_CASE("conv2d identity kernel and zero kernel") {
  Rng rng(7);
  Tensor x = random_tensor({2, 5, 5, 1}, rng, 0.0f, 1.0f);
  Tensor k1({1, 1, 1, 1}, {1.0f});
  Tape tape;
  Var out = conv2d(tape.leaf(x), tape.leaf(k1), 1, Padding::same);
  CHECK(allclose(out.val(), x));

  Tensor k0({3, 3, 1, 2});
  Tape t2;
  Var out0 = conv2d(t2.leaf(x), t2.leaf(k0), 1, Padding::same);
  for (int64_t i = 0; i < out0.val().size(); ++i) CHECK(out0.val()[i] == 0.0f);
}

TEST_CASE("conv2d matches quadruple-loop reference on random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_u32(2));
    int h = 3 + static_cast<int>(rng.uniform_u32(6));
    int w = 3 + static_cast<int>(rng.uniform_u32(6));
    int ci = 1 + static_cast<int>(rng.uniform_u32(3));
    int co = 1 + static_cast<int>(rng.uniform_u32(4));
    int kh = 1 + static_cast<int>(rng.uniform_u32(std::min(h, 4)));
    int kw = 1 + static_cast<int>(rng.uniform_u32(std::min(w, 4)));
    int stride = 1 + static_cast<int>(rng.uniform_u32(2));
    Padding pad = rng.bernoulli(0.5f) ? Padding::same : Padding::valid;
    Tensor x = random_tensor({n, h, w, ci}, rng);
    Tensor k = random_tensor({kh, kw, ci, co}, rng);
    Tape tape;
    Var out = conv2d(tape.leaf(x), tape.leaf(k), stride, pad);
    Tensor ref = oracle::conv2d_brute(x, k, stride, pad);
    CHECK(same_shape(out.val().shape(), ref.shape()));
    CHECK(allclose(out.val(), ref, 1e-4f, 1e-4f));
  }
}

TEST_CASE("conv2d same-padding output size follows ceil(H/stride)") {
  Tensor x({1, 28, 28, 1});
  Tensor k({5, 5, 1, 32});
  Tape tape;
  Var out = conv2d(tape.leaf(x), tape.leaf(k), 2, Padding::same);
  CHECK(out.val().dim(1) == 14);
  CHECK(out.val().dim(2) == 14);
  CHECK(out.val().dim(3) == 32);
}

TEST_CASE("conv2d rejects kernel larger than input in valid mode") {
  Tensor x({1, 3, 3, 1});
  Tensor k({5, 5, 1, 1});
  Tape tape;
  CHECK_THROWS_AS(conv2d(tape.leaf(x), tape.leaf(k), 1, Padding::valid), ShapeError);
}

TEST_CASE("activations analytic values") {
  Tensor x({3}, {-1.0f, 2.5f, -2.0f});
  Tape tape;
  Var r = relu(tape.leaf(x));
  CHECK(r.val()[0] == 0.0f);
  CHECK(r.val()[1] == 2.5f);
  Var l = leaky_relu(tape.leaf(x), 0.1f);
  CHECK(l.val()[2] == doctest::Approx(-0.2f));
}

TEST_CASE("softmax cross entropy analytic cases") {
  // uniform logits, one-hot target, K=10 -> ln 10
  Tensor z({1, 10});
  Tensor y = one_hot({3}, 10);
  Tape tape;
  Var loss = softmax_cross_entropy(tape.leaf(z), tape.leaf(y));
  CHECK(loss.val().item() == doctest::Approx(2.302585092994046).epsilon(1e-6));

  // dominant correct logit drives the loss to zero
  Tensor z2({1, 3}, {30.0f, 0.0f, 0.0f});
  Tensor y2 = one_hot({0}, 3);
  Tape t2;
  Var loss2 = softmax_cross_entropy(t2.leaf(z2), t2.leaf(y2));
  CHECK(loss2.val().item() < 1e-6f);

  // independently evaluated: -log softmax([1,2,3])[2]
  Tensor z3({1, 3}, {1.0f, 2.0f, 3.0f});
  Tensor y3 = one_hot({2}, 3);
  Tape t3;
  Var loss3 = softmax_cross_entropy(t3.leaf(z3), t3.leaf(y3));
  CHECK(loss3.val().item() == doctest::Approx(0.4076059644443803).epsilon(1e-6));
}

TEST_CASE("softmax cross entropy rejects unnormalized target rows") {
  Tensor z({1, 3});
  Tensor y({1, 3}, {0.5f, 0.2f, 0.2f});
  Tape tape;
  CHECK_THROWS_AS(softmax_cross_entropy(tape.leaf(z), tape.leaf(y)), ContractViolation);
}

TEST_CASE("softmax rows stay normalized") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = random_tensor({4, 7}, rng, -30.0f, 30.0f);
    Tensor p = softmax_rows(z);
    for (int n = 0; n < 4; ++n) {
      double s = 0.0;
      for (int k = 0; k < 7; ++k) {
        float v = p[static_cast<int64_t>(n) * 7 + k];
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("backward through constant loss leaves zero gradient") {
  Tensor p({2, 2}, {1, 2, 3, 4});
  p.requires_grad = true;
  Tape tape;
  tape.leaf(p);  // registered but unused by the loss
  Var c = tape.constant(Tensor({1}, std::vector<float>{5.0f}));
  tape.backward(c.id);
  REQUIRE(p.grad.size() == 4);
  for (float g : p.grad) CHECK(g == 0.0f);
}

TEST_CASE("backward of linear form recovers the input") {
  Tensor w({1, 3}, {0.5f, -1.0f, 2.0f});
  Tensor x({3, 1}, {1.0f, 2.0f, 3.0f});
  w.requires_grad = true;
  w.zero_grad();
  Tape tape;
  Var out = matmul(tape.leaf(w), tape.leaf(x));
  tape.backward(out.id);
  REQUIRE(w.grad.size() == 3);
  CHECK(w.grad[0] == doctest::Approx(1.0f));
  CHECK(w.grad[1] == doctest::Approx(2.0f));
  CHECK(w.grad[2] == doctest::Approx(3.0f));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x({2, 2}, {1, 2, 3, 4});
  x.requires_grad = true;
  Tape tape;
  Var v = tape.leaf(x);
  CHECK_THROWS_AS(tape.backward(v.id), ContractViolation);
}

TEST_CASE("two-layer net gradients match central finite differences") {
  // h = 1e-3, worst-case per-tensor relative error < 1e-3
  Rng rng(101);
  Tensor w1 = random_tensor({4, 6}, rng, -0.8f, 0.8f);
  Tensor b1 = random_tensor({6}, rng, -0.2f, 0.2f);
  Tensor w2 = random_tensor({6, 3}, rng, -0.8f, 0.8f);
  Tensor x = random_tensor({5, 4}, rng, 0.1f, 1.0f);
  Tensor y = one_hot({0, 1, 2, 1, 0}, 3);

  auto loss_only = [&]() {
    Tape t;
    Var h1 = relu(bias_add(matmul(t.leaf(x), t.leaf(w1)), t.leaf(b1)));
    Var logits = matmul(h1, t.leaf(w2));
    return softmax_cross_entropy(logits, t.leaf(y)).val().item();
  };
  auto loss_bwd = [&]() {
    Tape t;
    Var h1 = relu(bias_add(matmul(t.leaf(x), t.leaf(w1)), t.leaf(b1)));
    Var logits = matmul(h1, t.leaf(w2));
    Var loss = softmax_cross_entropy(logits, t.leaf(y));
    t.backward(loss.id);
    return loss.val().item();
  };
  std::vector<Tensor*> params{&w1, &b1, &w2};
  double err = oracle::grad_check(loss_bwd, params, loss_only);
  CHECK(err < 1e-3);
}

TEST_CASE("every differentiable op passes finite-difference checks over 100 seeds") {
  int failures = 0;
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    // exercise a different op family per seed, round-robin
    double err = 0.0;
    switch (seed % 5) {
      case 0: {  // conv -> bias -> leaky -> pool -> CE
        // keep pre-activations away from the kink so central differences see
        // a smooth function across the probe span
        Tensor x({1, 5, 5, 2}), k({3, 3, 2, 3}), b({3});
        for (bool ok = false; !ok;) {
          x = random_tensor({1, 5, 5, 2}, rng, 0.1f, 0.9f);
          k = random_tensor({3, 3, 2, 3}, rng, -0.5f, 0.5f);
          b = random_tensor({3}, rng, -0.2f, 0.2f);
          Tape probe;
          Var pre = bias_add(conv2d(probe.leaf(x), probe.leaf(k), 2, Padding::same), probe.leaf(b));
          ok = true;
          for (int64_t i = 0; i < pre.val().size(); ++i)
            if (std::fabs(pre.val()[i]) < 0.05f) ok = false;
        }
        Tensor y = one_hot({0}, 3);
        auto fwd = [&](bool bwd) {
          Tape t;
          Var h = leaky_relu(bias_add(conv2d(t.leaf(x), t.leaf(k), 2, Padding::same), t.leaf(b)), 0.1f);
          Var loss = softmax_cross_entropy(global_avg_pool(h), t.leaf(y));
          if (bwd) t.backward(loss.id);
          return loss.val().item();
        };
        std::vector<Tensor*> ps{&k, &b};
        err = oracle::grad_check([&] { return fwd(true); }, ps, [&] { return fwd(false); });
        break;
      }
      case 1: {  // batch norm path
        Tensor x = random_tensor({3, 2, 2, 2}, rng, -1.0f, 1.0f);
        Tensor g = random_tensor({2}, rng, 0.5f, 1.5f);
        Tensor be = random_tensor({2}, rng, -0.3f, 0.3f);
        Tensor y = one_hot({0, 1, 0}, 2);
        auto fwd = [&](bool bwd) {
          Tape t;
          Var h = batch_norm_simplified(t.leaf(x), t.leaf(g), t.leaf(be));
          Var loss = softmax_cross_entropy(global_avg_pool(h), t.leaf(y));
          if (bwd) t.backward(loss.id);
          return loss.val().item();
        };
        std::vector<Tensor*> ps{&g, &be, &x};
        err = oracle::grad_check([&] { return fwd(true); }, ps, [&] { return fwd(false); });
        break;
      }
      case 2: {  // sigmoid blend path (the cleanse surface)
        Tensor x = random_tensor({1, 2, 2, 1}, rng, 0.1f, 0.9f);
        Tensor wm = random_tensor({2, 2}, rng, -1.0f, 1.0f);
        Tensor wp = random_tensor({2, 2, 1}, rng, -1.0f, 1.0f);
        // target near the blend output keeps |loss| small relative to its
        // gradients, which keeps the fd probe above the float32 noise floor
        Tensor target({1, 2, 2, 1});
        {
          Tape probe;
          Var blended = masked_blend(probe.leaf(x), sigmoid(probe.leaf(wm)), sigmoid(probe.leaf(wp)));
          for (int64_t i = 0; i < target.size(); ++i)
            target[i] = blended.val()[i] + rng.uniform_float(-0.35f, 0.35f);
        }
        auto fwd = [&](bool bwd) {
          Tape t;
          Var blended = masked_blend(t.leaf(x), sigmoid(t.leaf(wm)), sigmoid(t.leaf(wp)));
          Var fit = sum_squares(sub(blended, t.leaf(target)));
          Var l1 = sum_abs(sigmoid(t.leaf(wm)));
          Var loss = weighted_sum_scalars({fit, l1}, {1.0f, 0.5f});
          if (bwd) t.backward(loss.id);
          return loss.val().item();
        };
        std::vector<Tensor*> ps{&wm, &wp};
        err = oracle::grad_check([&] { return fwd(true); }, ps, [&] { return fwd(false); });
        break;
      }
      case 3: {  // residual add + mul + scale
        Tensor a = random_tensor({3, 4}, rng, -1.0f, 1.0f);
        Tensor b = random_tensor({3, 4}, rng, -1.0f, 1.0f);
        Tensor y = one_hot({1, 0, 3}, 4);
        auto fwd = [&](bool bwd) {
          Tape t;
          Var s = add(scale(mul(t.leaf(a), t.leaf(b)), 0.7f), t.leaf(a));
          Var loss = softmax_cross_entropy(s, t.leaf(y));
          if (bwd) t.backward(loss.id);
          return loss.val().item();
        };
        std::vector<Tensor*> ps{&a, &b};
        err = oracle::grad_check([&] { return fwd(true); }, ps, [&] { return fwd(false); });
        break;
      }
      default: {  // norms on mask*pattern
        Tensor m = random_tensor({3, 3}, rng, -1.0f, 1.0f);
        Tensor p = random_tensor({3, 3, 2}, rng, 0.2f, 0.9f);
        auto fwd = [&](bool bwd) {
          Tape t;
          Var tp = mask_times_pattern(sigmoid(t.leaf(m)), t.leaf(p));
          Var loss = sqrt_scalar(sum_squares(tp));
          if (bwd) t.backward(loss.id);
          return loss.val().item();
        };
        std::vector<Tensor*> ps{&m, &p};
        err = oracle::grad_check([&] { return fwd(true); }, ps, [&] { return fwd(false); });
        break;
      }
    }
    if (err >= 1e-3) {
      ++failures;
      MESSAGE("seed ", seed, " family ", seed % 5, " relative error ", err);
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("optimizer analytic steps") {
  // zero gradient leaves parameters unchanged
  Tensor p({2}, {1.0f, -2.0f});
  p.zero_grad();
  std::vector<Tensor*> ps{&p};
  SgdState sgd;
  sgd.lr = 0.1f;
  sgd_step(ps, sgd);
  CHECK(p[0] == 1.0f);
  CHECK(p[1] == -2.0f);

  // sgd: p <- p - lr*g
  p.grad = {2.0f, 0.0f};
  sgd_step(ps, sgd);
  CHECK(p[0] == doctest::Approx(0.8f));

  // adam single step from zero state, hand-evaluated update formula
  Tensor q({1}, {1.0f});
  q.grad = {2.0f};
  std::vector<Tensor*> qs{&q};
  AdamState adam;
  adam.lr = 1e-3f;
  adam_step(qs, adam);
  // m=0.2, v=0.004, mhat=2, vhat=4, p' = 1 - 1e-3*2/(2+1e-8)
  CHECK(q[0] == doctest::Approx(0.999000000005).epsilon(1e-6));
  CHECK(adam.step_count == 1);
}

TEST_CASE("aux ops hold their analytic identities") {
  // global_avg_pool of a constant map is that constant
  Tensor x({1, 3, 3, 2}, 0.75f);
  Tape t;
  Var pooled = global_avg_pool(t.leaf(x));
  CHECK(pooled.val()[0] == doctest::Approx(0.75f));
  CHECK(pooled.val()[1] == doctest::Approx(0.75f));

  // residual add with zero is identity
  Rng rng(5);
  Tensor a = random_tensor({2, 4}, rng);
  Tensor z({2, 4});
  Tape t2;
  Var s = add(t2.leaf(a), t2.leaf(z));
  CHECK(allclose(s.val(), a));

  // batch norm with zero variance stays finite through the epsilon floor
  Tensor xc({4, 1, 1, 1}, 3.0f);
  Tensor g({1}, {1.0f});
  Tensor b({1}, {0.5f});
  Tape t3;
  Var bn = batch_norm_simplified(t3.leaf(xc), t3.leaf(g), t3.leaf(b));
  for (int64_t i = 0; i < bn.val().size(); ++i) {
    CHECK(std::isfinite(bn.val()[i]));
    CHECK(bn.val()[i] == doctest::Approx(0.5f));  // xhat = 0, so out = beta
  }

  // flatten keeps values, reshapes
  Tensor f({2, 2, 1, 3});
  Tape t4;
  Var fl = flatten(t4.leaf(f));
  CHECK(fl.val().dim(0) == 2);
  CHECK(fl.val().dim(1) == 6);
}

TEST_CASE("fixed seed gives bit-identical training trajectories") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor w = random_tensor({3, 2}, rng, -0.5f, 0.5f);
    Tensor x = random_tensor({8, 3}, rng, 0.0f, 1.0f);
    Tensor y = one_hot({0, 1, 0, 1, 1, 0, 1, 0}, 2);
    std::vector<Tensor*> ps{&w};
    AdamState adam;
    for (int step = 0; step < 5; ++step) {
      zero_grads(ps);
      Tape t;
      w.requires_grad = true;
      Var loss = softmax_cross_entropy(matmul(t.leaf(x), t.leaf(w)), t.leaf(y));
      t.backward(loss.id);
      adam_step(ps, adam);
    }
    return w.values();
  };
  auto a = run(42);
  auto b = run(42);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5, 0.0f)), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  t.ensure_grad();
  CHECK(t.grad.size() == 4);
  Tensor nan_t({1}, {std::nanf("")});
  CHECK_THROWS_AS(nan_t.check_finite("test"), Error);
}
