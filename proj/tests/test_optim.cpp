#include <doctest.h>

#include <cmath>

#include "pulse/optim.hpp"
#include "support.hpp"

using namespace pulse;
using test::tensor;

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    Rng rng(31);
    std::vector<Tensor> params{test::randn(rng, {3, 4}), test::randn(rng, {5})};
    const auto before = params;
    std::vector<Tensor> grads{Tensor({3, 4}), Tensor({5})};
    AdamState st({}, params);
    for (int i = 0; i < 5; ++i) adam_step(params, grads, st);
    CHECK(params == before);
    CHECK(st.step == 5);
}

TEST_CASE("first adam step moves a scalar by about -lr") {
    std::vector<Tensor> params{Tensor({1}, 1.0f)};
    std::vector<Tensor> grads{Tensor({1}, 1.0f)};
    AdamState st({}, params);
    adam_step(params, grads, st);
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(static_cast<double>(params[0][0]) - 1.0 == doctest::Approx(-0.0005).epsilon(1e-4));
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [] {
        Rng rng(32);
        std::vector<Tensor> params{test::randn(rng, {4, 4})};
        AdamState st({}, params);
        for (int i = 0; i < 20; ++i) {
            std::vector<Tensor> grads{test::randn(rng, {4, 4})};
            adam_step(params, grads, st);
        }
        return params;
    };
    CHECK(run() == run());
}

TEST_CASE("adam rejects mismatched shapes") {
    std::vector<Tensor> params{Tensor({2})};
    AdamState st({}, params);
    std::vector<Tensor> grads{Tensor({3})};
    CHECK_THROWS_AS(adam_step(params, grads, st), DimensionError);
}

TEST_CASE("l1 loss") {
    const std::vector<float> a{1, 3}, zero{0, 0};
    CHECK(l1_loss(a, zero) == 2.0);
    CHECK(l1_loss(a, a) == 0.0);
    const std::vector<float> three{1, 2, 3};
    CHECK_THROWS_AS(l1_loss(three, a), DimensionError);
}
