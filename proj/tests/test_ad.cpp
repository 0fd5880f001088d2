#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "flownovel/adam.hpp"
#include "flownovel/tape.hpp"

using namespace flownovel;
using ad::Tape;
using ad::Tensor;
using ad::Var;

TEST_CASE("matmul identity and hand arithmetic") {
    Tape t;
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Rng rng(1);
    Tensor m = Tensor::randn({3, 4}, rng);
    Var vm = t.constant(m);
    Var out = t.matmul(t.constant(eye), vm);
    CHECK(fd::max_abs_diff(t.value(out), m) == 0.0);

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {1, 1});
    Var prod = t.matmul(t.constant(a), t.constant(b));
    CHECK(t.value(prod)[0] == doctest::Approx(3.0));
    CHECK(t.value(prod)[1] == doctest::Approx(7.0));
}

TEST_CASE("matmul shape mismatch") {
    Tape t;
    Var a = t.constant(Tensor::zeros({2, 3}));
    Var b = t.constant(Tensor::zeros({2, 3}));
    CHECK_THROWS_AS((void)t.matmul(a, b), contract_error);
}

TEST_CASE("matmul gradient of sum equals ones * b^T") {
    Rng rng(7);
    Tensor a = Tensor::randn({4, 5}, rng);
    Tensor b = Tensor::randn({5, 2}, rng);

    Tape t;
    Var va = t.leaf(a, true);
    Var loss = t.sum(t.matmul(va, t.constant(b)));
    t.backward(loss);

    // expected: ones(4,2) * b^T
    Tensor expected({4, 5});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            double s = 0.0;
            for (int k = 0; k < 2; ++k) s += b.at(j, k);
            expected.at(i, j) = s;
        }
    CHECK(fd::max_rel_err(t.grad(va), expected) < 1e-12);

    // and the finite-difference oracle agrees
    auto f = [&](const Tensor& x) {
        Tape t2;
        return t2.value(t2.sum(t2.matmul(t2.constant(x), t2.constant(b)))).item();
    };
    Tensor numeric = fd::gradient(f, a, 1e-6);
    CHECK(fd::max_rel_err(t.grad(va), numeric) < 1e-5);
}

TEST_CASE("elementwise basics") {
    Tape t;
    CHECK(t.value(t.tanh(t.constant(0.0))).item() == 0.0);

    Rng rng(3);
    Tensor x = Tensor::uniform({2, 3}, 0.1, 4.0, rng);
    Var vx = t.constant(x);
    Var round_trip = t.exp(t.log(vx));
    CHECK(fd::max_rel_err(t.value(round_trip), x) < 1e-12);

    CHECK_THROWS_AS((void)t.log(t.constant(-1.0)), contract_error);
    CHECK_THROWS_AS((void)t.div(t.constant(1.0), t.constant(0.0)), contract_error);
}

TEST_CASE("tanh derivative at 0.5") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(0.5), true);
    Var y = t.tanh(x);
    t.backward(y);
    double expected = 1.0 - std::tanh(0.5) * std::tanh(0.5);
    CHECK(t.grad(x)[0] == doctest::Approx(expected).epsilon(1e-10));
    CHECK(t.grad(x)[0] == doctest::Approx(0.78644).epsilon(1e-4));

    auto f = [](const Tensor& v) {
        Tape t2;
        return t2.value(t2.tanh(t2.constant(v))).item();
    };
    Tensor numeric = fd::gradient(f, Tensor::scalar(0.5));
    CHECK(fd::rel_err(t.grad(x)[0], numeric[0]) < 1e-4);
}

TEST_CASE("backward on simple losses") {
    Tape t;
    Tensor p({3}, {1, 2, 3});
    Var vp = t.leaf(p, true);
    t.backward(t.sum(t.mul(vp, vp)));
    CHECK(t.grad(vp)[0] == doctest::Approx(2.0));
    CHECK(t.grad(vp)[1] == doctest::Approx(4.0));
    CHECK(t.grad(vp)[2] == doctest::Approx(6.0));

    Tape t2;
    Var vq = t2.leaf(p, true);
    t2.backward(t2.sum(vq));
    for (int i = 0; i < 3; ++i) CHECK(t2.grad(vq)[i] == doctest::Approx(1.0));
}

TEST_CASE("non-scalar loss rejected") {
    Tape t;
    Var v = t.leaf(Tensor::zeros({2, 2}), true);
    CHECK_THROWS_AS(t.backward(v), contract_error);
}

TEST_CASE("two-layer tanh mlp gradients match finite differences") {
    Rng rng(11);
    Tensor w1 = Tensor::uniform({4, 6}, -0.5, 0.5, rng);
    Tensor b1 = Tensor::uniform({6}, -0.1, 0.1, rng);
    Tensor w2 = Tensor::uniform({6, 3}, -0.5, 0.5, rng);
    Tensor b2 = Tensor::uniform({3}, -0.1, 0.1, rng);
    Tensor x = Tensor::randn({5, 4}, rng);

    auto loss_fn = [&](const Tensor& cw1, const Tensor& cb1, const Tensor& cw2,
                       const Tensor& cb2) {
        Tape t;
        Var h = t.tanh(t.linear(t.constant(x), t.constant(cw1), t.constant(cb1)));
        Var out = t.linear(h, t.constant(cw2), t.constant(cb2));
        return t.value(t.sum(t.mul(out, out))).item();
    };

    Tape t;
    Var vw1 = t.leaf(w1, true), vb1 = t.leaf(b1, true);
    Var vw2 = t.leaf(w2, true), vb2 = t.leaf(b2, true);
    Var h = t.tanh(t.linear(t.constant(x), vw1, vb1));
    Var out = t.linear(h, vw2, vb2);
    t.backward(t.sum(t.mul(out, out)));

    Tensor g1 = fd::gradient([&](const Tensor& v) { return loss_fn(v, b1, w2, b2); }, w1);
    Tensor g2 = fd::gradient([&](const Tensor& v) { return loss_fn(w1, v, w2, b2); }, b1);
    Tensor g3 = fd::gradient([&](const Tensor& v) { return loss_fn(w1, b1, v, b2); }, w2);
    Tensor g4 = fd::gradient([&](const Tensor& v) { return loss_fn(w1, b1, w2, v); }, b2);
    CHECK(fd::max_rel_err(t.grad(vw1), g1) < 1e-4);
    CHECK(fd::max_rel_err(t.grad(vb1), g2) < 1e-4);
    CHECK(fd::max_rel_err(t.grad(vw2), g3) < 1e-4);
    CHECK(fd::max_rel_err(t.grad(vb2), g4) < 1e-4);
}

TEST_CASE("gradient check across ops on random inputs") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = Tensor::uniform({2, 3}, 0.2, 2.0, rng);
        Tensor y = Tensor::uniform({2, 3}, 0.3, 1.5, rng);

        auto build = [&](Tape& t, Var vx, Var vy) {
            Var a = t.add(vx, vy);
            Var s = t.sub(vx, vy);
            Var m = t.mul(a, s);
            Var d = t.div(vx, vy);
            Var e = t.exp(t.neg(vy));
            Var l = t.log(vx);
            Var th = t.tanh(m);
            Var mix = t.add(t.mul(th, e), t.add(l, d));
            Var rs = t.row_sum(t.reverse_cols(t.slice_cols(mix, 0, 3)));
            return t.mean(rs);
        };

        Tape t;
        Var vx = t.leaf(x, true), vy = t.leaf(y, true);
        t.backward(build(t, vx, vy));

        auto fx = [&](const Tensor& v) {
            Tape t2;
            return t2.value(build(t2, t2.constant(v), t2.constant(y))).item();
        };
        auto fy = [&](const Tensor& v) {
            Tape t2;
            return t2.value(build(t2, t2.constant(x), t2.constant(v))).item();
        };
        CHECK(fd::max_rel_err(t.grad(vx), fd::gradient(fx, x)) < 1e-4);
        CHECK(fd::max_rel_err(t.grad(vy), fd::gradient(fy, y)) < 1e-4);
    }
}

TEST_CASE("scalar broadcasting") {
    Tape t;
    Tensor x({2, 2}, {1, 2, 3, 4});
    Var vx = t.leaf(x, true);
    Var c = t.leaf(Tensor::scalar(2.0), true);
    Var y = t.mul(vx, c);
    t.backward(t.sum(y));
    CHECK(t.value(y).at(1, 1) == doctest::Approx(8.0));
    CHECK(t.grad(c)[0] == doctest::Approx(10.0)); // sum of x
    for (std::size_t i = 0; i < 4; ++i) CHECK(t.grad(vx)[i] == doctest::Approx(2.0));
}

TEST_CASE("no gradient leakage to unused parameters") {
    Tape t;
    Var used = t.leaf(Tensor::scalar(1.5), true);
    Var unused = t.leaf(Tensor::ones({3}), true);
    t.backward(t.mul(used, used));
    for (int i = 0; i < 3; ++i) CHECK(t.grad(unused)[i] == 0.0);
}

TEST_CASE("tape determinism: identical seeds give bit-identical gradients") {
    auto run2 = [] {
        Rng rng(99);
        Tensor w = Tensor::uniform({3, 3}, -1, 1, rng);
        Tensor x = Tensor::randn({4, 3}, rng);
        Tape t;
        Var vw = t.leaf(w, true);
        Var out = t.tanh(t.matmul(t.constant(x), vw));
        Var loss = t.mean(t.mul(out, out));
        t.backward(loss);
        return std::make_pair(t.value(loss).item(), t.grad(vw));
    };
    auto [l1, g1] = run2();
    auto [l2, g2] = run2();
    CHECK(l1 == l2);
    for (std::size_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("adam: zero gradient and zero weight decay leaves params unchanged") {
    ad::AdamConfig cfg;
    cfg.weight_decay = 0.0;
    ad::Adam opt(cfg);
    Tensor p({3}, {1.0, -2.0, 0.5});
    Tensor before = p;
    opt.step({&p}, {Tensor::zeros({3})});
    for (int i = 0; i < 3; ++i) CHECK(p[i] == before[i]);
}

TEST_CASE("adam: first step moves by about the learning rate") {
    ad::AdamConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.0;
    ad::Adam opt(cfg);
    Tensor p({1}, {5.0});
    opt.step({&p}, {Tensor::scalar(1.0)});
    // bias correction makes step 1 equal lr * g/(|g| + eps)
    CHECK(5.0 - p[0] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: converges on (p-3)^2") {
    ad::AdamConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    ad::Adam opt(cfg);
    Tensor p({1}, {0.0});
    for (int i = 0; i < 100; ++i) {
        Tensor g({1}, {2.0 * (p[0] - 3.0)});
        opt.step({&p}, {g});
    }
    CHECK(std::abs(p[0] - 3.0) < 0.5);
}

TEST_CASE("adam: weight decay pulls toward zero") {
    ad::AdamConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.001;
    ad::Adam opt(cfg);
    Tensor p({1}, {4.0});
    opt.step({&p}, {Tensor::scalar(0.0)});
    CHECK(p[0] < 4.0); // decay term acts as gradient 0.001*4
}
