#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "triage/numerics.hpp"

using namespace triage;
using namespace triage::numerics;

namespace {

// max |a-f| / max(|a|+|f|, floor), the gradcheck comparison used throughout.
double max_rel_err(const Vec& analytic, const Vec& fd) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(std::abs(analytic[i]) + std::abs(fd[i]), 1e-6);
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("affine computes weight*x + bias") {
    DenseParams p;
    p.weight = Mat(2, 2);
    p.weight(0, 0) = 1.0;
    p.weight(1, 1) = 1.0;
    p.bias = {0.0, 0.0};
    CHECK(affine(p, Vec{2, 3}) == Vec{2, 3});

    p.weight = Mat(1, 3);  // zero weight
    p.bias = {1.0};
    CHECK(affine(p, Vec{9, 9, 9}) == Vec{1.0});

    rng::Random rng(3);
    DenseParams q;
    q.weight = Mat(4, 6);
    for (double& w : q.weight.data) w = rng.uniform(-2, 2);
    q.bias.resize(4);
    for (double& b : q.bias) b = rng.uniform(-1, 1);
    Vec x(6);
    for (double& v : x) v = rng.uniform(-1, 1);
    const Vec got = affine(q, x);
    for (std::size_t r = 0; r < 4; ++r) {
        double want = q.bias[r];
        for (std::size_t c = 0; c < 6; ++c) want += q.weight(r, c) * x[c];
        CHECK(got[r] == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK_THROWS(affine(q, Vec{1, 2}));
}

TEST_CASE("activations: values, symmetry, monotonicity") {
    CHECK(sigmoid(0.0) == doctest::Approx(0.5));
    CHECK(tanh_(0.0) == doctest::Approx(0.0));
    CHECK(std::isfinite(sigmoid(500.0)));
    CHECK(std::isfinite(sigmoid(-500.0)));

    rng::Random rng(4);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(-30, 30);
        CHECK(sigmoid(-x) == doctest::Approx(1.0 - sigmoid(x)).epsilon(1e-12));
        const double y = x + rng.uniform(1e-6, 1.0);
        CHECK(sigmoid(x) <= sigmoid(y));
        CHECK(tanh_(x) <= tanh_(y));
    }
    // Strict monotonicity where doubles can still resolve the difference.
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(-8, 8);
        const double y = x + rng.uniform(1e-6, 1.0);
        CHECK(sigmoid(x) < sigmoid(y));
        CHECK(tanh_(x) < tanh_(y));
    }
}

TEST_CASE("bce_loss analytic values and scalar-loop oracle") {
    CHECK(bce_loss(Vec{0.5}, Vec{1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(bce_loss(Vec{1.0, 0.0}, Vec{1.0, 0.0}) <= 1e-6);  // perfect fit after clamping

    rng::Random rng(5);
    Vec p(16), y(16);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = rng.uniform(0.01, 0.99);
        y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    double want = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        want -= y[i] * std::log(p[i]) + (1.0 - y[i]) * std::log(1.0 - p[i]);
    want /= static_cast<double>(p.size());
    CHECK(bce_loss(p, y) == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS(bce_loss(Vec{0.5}, Vec{1.0, 0.0}));
}

TEST_CASE("adam_step: zero gradient, hand-executed step, determinism") {
    SUBCASE("zero gradient leaves parameters, increments t") {
        Vec w{1.5, -2.0};
        Vec g{0.0, 0.0};
        AdamState st;
        ParamView pv{"w", w.data(), w.size()};
        ConstParamView gv{"w", g.data(), g.size()};
        adam_step(st, std::span(&pv, 1), std::span(&gv, 1));
        CHECK(st.t == 1);
        CHECK(w == Vec{1.5, -2.0});
    }
    SUBCASE("one step on scalar w=0, g=1 moves by about -lr") {
        Vec w{0.0};
        Vec g{1.0};
        AdamState st;
        ParamView pv{"w", w.data(), 1};
        ConstParamView gv{"w", g.data(), 1};
        adam_step(st, std::span(&pv, 1), std::span(&gv, 1));
        // Bias-corrected first step: mhat = 1, vhat = 1 -> step = lr/(1+eps).
        CHECK(w[0] == doctest::Approx(-0.001).epsilon(1e-6));
    }
    SUBCASE("two optimizers with the same trajectory stay identical") {
        Vec w1{0.3, 0.7}, w2{0.3, 0.7};
        AdamState s1, s2;
        rng::Random rng(6);
        for (int step = 0; step < 20; ++step) {
            Vec g{rng.uniform(-1, 1), rng.uniform(-1, 1)};
            ParamView p1{"w", w1.data(), 2}, p2{"w", w2.data(), 2};
            ConstParamView gv{"w", g.data(), 2};
            adam_step(s1, std::span(&p1, 1), std::span(&gv, 1));
            adam_step(s2, std::span(&p2, 1), std::span(&gv, 1));
        }
        CHECK(w1 == w2);
    }
    SUBCASE("non-finite gradient names the block") {
        Vec w{0.0};
        Vec g{std::numeric_limits<double>::quiet_NaN()};
        AdamState st;
        ParamView pv{"bad_block", w.data(), 1};
        ConstParamView gv{"bad_block", g.data(), 1};
        CHECK_THROWS_WITH_AS(adam_step(st, std::span(&pv, 1), std::span(&gv, 1)),
                             doctest::Contains("bad_block"), std::runtime_error);
    }
}

TEST_CASE("plateau_update traces the patience counter") {
    PlateauScheduler s{2, 0.1, 1e-6};
    double lr = 0.001;
    lr = plateau_update(s, 1.0, lr);  // improvement (best was inf)
    CHECK(lr == doctest::Approx(0.001));
    lr = plateau_update(s, 0.5, lr);  // improvement
    CHECK(lr == doctest::Approx(0.001));
    lr = plateau_update(s, 0.6, lr);  // stale 1
    CHECK(lr == doctest::Approx(0.001));
    lr = plateau_update(s, 0.6, lr);  // stale 2 -> reduce
    CHECK(lr == doctest::Approx(0.0001));

    // Never below min_lr.
    PlateauScheduler s2{1, 0.1, 1e-6};
    double lr2 = 1e-5;
    lr2 = plateau_update(s2, 1.0, lr2);
    lr2 = plateau_update(s2, 2.0, lr2);
    CHECK(lr2 == doctest::Approx(1e-6));
    lr2 = plateau_update(s2, 3.0, lr2);
    CHECK(lr2 == doctest::Approx(1e-6));
}

TEST_CASE("finite_diff_grad on analytic functions") {
    const auto square = [](const Vec& t) { return t[0] * t[0]; };
    const Vec g = finite_diff_grad(square, Vec{3.0});
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

    const auto constant = [](const Vec&) { return 42.0; };
    for (double v : finite_diff_grad(constant, Vec{1.0, -2.0, 0.5}))
        CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("backprop of bce(sigmoid(stack(x))) matches finite differences") {
    rng::Random rng(7);
    for (int draw = 0; draw < 5; ++draw) {
        const std::vector<std::size_t> hidden{5};
        DenseStack stack = DenseStack::make(4, hidden, 3, rng);
        Mat X(6, 4), Y(6, 3);
        for (double& v : X.data) v = rng.gaussian();
        for (double& v : Y.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

        DenseStack grads = zero_like(stack);
        bce_sigmoid_batch(stack, X, Y, &grads);
        const Vec analytic = pack(grads.const_param_views());

        DenseStack probe = stack;
        auto views = probe.param_views();
        const Vec theta = pack(probe.const_param_views());
        const auto loss = [&](const Vec& t) {
            unpack(views, t);
            return bce_sigmoid_batch(probe, X, Y, nullptr);
        };
        const Vec fd = finite_diff_grad(loss, theta);
        CHECK(max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("train_dense_sigmoid is deterministic and learns a separable problem") {
    rng::Random rng(8);
    Mat X(80, 2), Y(80, 1);
    for (std::size_t i = 0; i < 80; ++i) {
        const bool pos = i % 2 == 0;
        X(i, 0) = rng.gaussian() + (pos ? 3.0 : -3.0);
        X(i, 1) = rng.gaussian();
        Y(i, 0) = pos ? 1.0 : 0.0;
    }
    TrainConfig cfg;
    cfg.max_epochs = 60;
    TrainLog log1, log2;
    DenseStack a = train_dense_sigmoid(X, Y, Mat(), Mat(), cfg, 42, &log1);
    DenseStack b = train_dense_sigmoid(X, Y, Mat(), Mat(), cfg, 42, &log2);
    CHECK(a.layers[0].weight.data == b.layers[0].weight.data);
    CHECK(a.layers[0].bias == b.layers[0].bias);
    CHECK(log1.final_train_loss == log2.final_train_loss);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < 80; ++i) {
        const Vec logits = a.forward(std::span(X.row(i), 2));
        const bool pred = sigmoid(logits[0]) > 0.5;
        correct += pred == (Y(i, 0) > 0.5) ? 1 : 0;
    }
    CHECK(correct >= 76);  // 95% on a 3-sigma separated problem
}

TEST_CASE("pack/unpack round-trips parameter blocks") {
    rng::Random rng(9);
    DenseStack s = DenseStack::make(3, std::vector<std::size_t>{4}, 2, rng);
    const Vec flat = pack(s.const_param_views());
    DenseStack t = zero_like(s);
    auto views = t.param_views();
    unpack(views, flat);
    CHECK(pack(t.const_param_views()) == flat);
}
