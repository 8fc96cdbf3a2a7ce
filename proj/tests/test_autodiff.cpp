#include <doctest.h>

#include <cmath>

#include "pulse/autodiff.hpp"
#include "pulse/model.hpp"
#include "pulse/selftest.hpp"
#include "support.hpp"

using namespace pulse;
using test::randn;
using D = BasicTensor<double>;

TEST_CASE("gradient of sum(2x) is 2") {
    ad::Tape<double> t;
    const ad::Var x = t.parameter(D({1}, 3.0), 0);
    const ad::Var loss = t.sum(t.scale(x, 2.0));
    const auto g = t.gradients(loss, D({1}, 1.0), 1);
    CHECK(g[0][0] == 2.0);
}

TEST_CASE("softmax then pick matches central differences") {
    Rng rng(21);
    D x = randn<double>(rng, {1, 5});
    auto f = [](const D& in, D* grad) {
        ad::Tape<double> t;
        const ad::Var v = t.parameter(in, 0);
        const ad::Var out = t.pick(t.softmax_rows(v), 0);
        if (grad) *grad = t.gradients(out, D({1}, 1.0), 1)[0];
        return t.value(out)[0];
    };
    D grad;
    f(x, &grad);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + 1e-3;
        const double up = f(x, nullptr);
        x[i] = keep - 1e-3;
        const double down = f(x, nullptr);
        x[i] = keep;
        const double numeric = (up - down) / 2e-3;
        CHECK(std::abs(grad[i] - numeric) / std::max(std::abs(numeric), 1e-8) < 1e-3);
    }
}

TEST_CASE("every tape op passes the finite-difference check") {
    const CheckResult r = check_op_gradients(22);
    INFO(r.detail);
    CHECK(r.passed);
}

TEST_CASE("gradient of a sum of losses is the sum of gradients") {
    Rng rng(23);
    const D a = randn<double>(rng, {3, 4}), w = randn<double>(rng, {4, 2}), b = randn<double>(rng, {2});
    auto grads = [&](int which) {
        ad::Tape<double> t;
        const ad::Var x = t.parameter(a, 0), wv = t.parameter(w, 1), bv = t.parameter(b, 2);
        const ad::Var y = t.dense(x, wv, bv);
        const ad::Var l1 = t.sum(t.relu(y));
        const ad::Var l2 = t.sum(t.scale(t.softmax_rows(y), 3.0));
        const ad::Var out = which == 0 ? t.add(l1, l2) : (which == 1 ? l1 : l2);
        return t.gradients(out, D({1}, 1.0), 3);
    };
    const auto both = grads(0), g1 = grads(1), g2 = grads(2);
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < both[s].size(); ++i) {
            CHECK(both[s][i] == doctest::Approx(g1[s][i] + g2[s][i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("constants receive no gradient and unreached slots are zero") {
    ad::Tape<double> t;
    const ad::Var c = t.constant(D({2}, 1.0));
    const ad::Var p = t.parameter(D({2}, 2.0), 0);
    t.parameter(D({3}, 5.0), 1);  // registered but unused
    const ad::Var out = t.sum(t.add(c, p));
    const auto g = t.gradients(out, D({1}, 1.0), 2);
    CHECK(g[0] == D({2}, 1.0));
    CHECK(g[1] == D({3}, 0.0));
}

TEST_CASE("backward rejects a seed of the wrong shape") {
    ad::Tape<double> t;
    const ad::Var p = t.parameter(D({2, 2}, 1.0), 0);
    CHECK_THROWS_AS(t.gradients(p, D({4}, 1.0), 1), DimensionError);
}

TEST_CASE("backward accumulates into caller buffers") {
    ad::Tape<double> t;
    const ad::Var p = t.parameter(D({2}, 1.0), 0);
    const ad::Var out = t.sum(t.scale(p, 3.0));
    std::vector<D> buf{D({2}, 1.0)};
    t.backward(out, D({1}, 1.0), buf);
    t.backward(out, D({1}, 1.0), buf);
    CHECK(buf[0] == D({2}, 7.0));
}

TEST_CASE("l1 loss on the tape") {
    ad::Tape<double> t;
    const ad::Var pred = t.parameter(BasicTensor<double>({2}, std::vector<double>{1, 3}), 0);
    const ad::Var target = t.constant(D({2}, 0.0));
    const ad::Var loss = t.l1_loss(pred, target);
    CHECK(t.value(loss)[0] == 2.0);
    const auto g = t.gradients(loss, D({1}, 1.0), 1);
    CHECK(g[0][0] == 0.5);
    CHECK(g[0][1] == 0.5);

    ad::Tape<double> z;
    const ad::Var same = z.parameter(D({1}, 4.0), 0);
    const ad::Var l0 = z.l1_loss(same, z.constant(D({1}, 4.0)));
    CHECK(z.value(l0)[0] == 0.0);
    CHECK(z.gradients(l0, D({1}, 1.0), 1)[0][0] == 0.0);
}

TEST_CASE("full network gradients in 64-bit mode") {
    const CheckResult r = check_model_gradients(tiny_config(), 24);
    INFO(r.detail);
    CHECK(r.passed);
}

TEST_CASE("full network gradients in 32-bit mode agree with 64-bit differences to 1e-2") {
    const PulseConfig c = tiny_config();
    Rng rng(25);
    PulseParams p = init_params(c, 3);
    for (Tensor& t : p.tensors) {
        for (auto& v : t.data()) v += static_cast<float>(0.05 * rng.normal());
    }
    const Tensor window = randn(rng, {c.input_channels(), c.window_length});

    auto rec = record_forward<float>(c, p.tensors, window, false);
    const auto grads = rec.tape.gradients(rec.output, Tensor({1}, 1.0f), p.tensors.size());

    std::vector<D> wide;
    for (const Tensor& t : p.tensors) wide.push_back(t.cast<double>());
    const D wwin = window.cast<double>();
    auto out = [&] {
        const auto f = record_forward<double>(c, wide, wwin, false);
        return f.tape.value(f.output)[0];
    };
    double worst = 0.0;
    for (std::size_t s = 0; s < wide.size(); ++s) {
        for (std::size_t i = 0; i < wide[s].size(); ++i) {
            const double keep = wide[s][i];
            wide[s][i] = keep + 1e-6;
            const double up = out();
            wide[s][i] = keep - 1e-6;
            const double down = out();
            wide[s][i] = keep;
            const double numeric = (up - down) / 2e-6;
            const double a = grads[s][i];
            worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4}));
        }
    }
    INFO("max rel err " << worst);
    CHECK(worst < 1e-2);
}
