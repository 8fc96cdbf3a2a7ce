#include <doctest.h>

#include <cmath>

#include "pulse/oracles.hpp"
#include "pulse/tensorcore.hpp"
#include "support.hpp"

using namespace pulse;
using test::randn;
using test::tensor;
using D = BasicTensor<double>;

TEST_CASE("conv1d identity kernel returns the input") {
    const Tensor x = tensor({1, 3}, {1, 2, 3});
    const Tensor y = conv1d_dilated(x, tensor({1, 1, 1}, {1}), tensor({1}, {0}), ConvSpec{1, 1, 1, 1, 0});
    CHECK(y == x);
}

TEST_CASE("conv1d two taps at dilation 2 read x[t] and x[t-2]") {
    const Tensor x = tensor({1, 4}, {1, 2, 3, 4});
    const Tensor y = conv1d_dilated(x, tensor({1, 1, 2}, {1, 1}), tensor({1}, {0}), ConvSpec{1, 1, 2, 2, 0});
    REQUIRE(y.shape() == Shape{1, 2});
    CHECK(y[0] == 4.0f);
    CHECK(y[1] == 6.0f);
}

TEST_CASE("conv1d tap order: tap 0 is the most recent sample") {
    // With same padding p = (K-1)d/2 the output at t sees x[t+p-d*i].
    const Tensor x = tensor({1, 5}, {0, 0, 1, 0, 0});
    const Tensor w = tensor({1, 1, 3}, {1, 10, 100});
    const Tensor y = conv1d_dilated(x, w, tensor({1}, {0}), ConvSpec{1, 1, 3, 1, 1});
    CHECK(y == tensor({1, 5}, {0, 1, 10, 100, 0}));
}

TEST_CASE("conv1d matches the loop oracle on 100 random cases") {
    Rng rng(11);
    for (int c = 0; c < 100; ++c) {
        const std::size_t k = 1 + rng.below(5), d = 1 + rng.below(3), reach = (k - 1) * d;
        const std::size_t pad = rng.below(reach + 1), cin = 1 + rng.below(4), cout = 1 + rng.below(4);
        const std::size_t len = std::max<std::size_t>(reach + 1, 1 + rng.below(32));
        const D x = randn<double>(rng, {cin, len}), w = randn<double>(rng, {cout, cin, k}), b = randn<double>(rng, {cout});
        const D got = conv1d_dilated(x, w, b, ConvSpec{cin, cout, k, d, pad});
        const D want = oracle::conv1d(x, w, b, d, pad);
        REQUIRE(got.shape() == want.shape());
        CHECK(test::max_abs_diff(got, want) <= 1e-6);
    }
}

TEST_CASE("conv1d at dilation 1 is a correlation with the flipped kernel") {
    Rng rng(12);
    const std::size_t k = 5, len = 20, pad = 2;
    const D x = randn<double>(rng, {1, len}), w = randn<double>(rng, {1, 1, k});
    const D y = conv1d_dilated(x, w, D({1}), ConvSpec{1, 1, k, 1, pad});
    for (std::size_t t = 0; t < len; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const long src = static_cast<long>(t + j) - static_cast<long>(pad);
            if (src >= 0 && src < static_cast<long>(len)) s += x[static_cast<std::size_t>(src)] * w[k - 1 - j];
        }
        CHECK(y[t] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("conv1d same padding keeps the length") {
    CHECK(ConvSpec::same_padding(3, 2) == 2);
    CHECK(ConvSpec::same_padding(5, 2) == 4);
    CHECK_THROWS_AS(ConvSpec::same_padding(2, 1), DimensionError);
    const ConvSpec s{1, 1, 3, 2, ConvSpec::same_padding(3, 2)};
    CHECK(s.output_length(256) == 256);
}

TEST_CASE("conv1d shape errors name the axis") {
    const Tensor x({2, 10});
    try {
        conv1d_dilated(x, Tensor({1, 3, 3}), Tensor({1}), ConvSpec{2, 1, 3, 1, 1});
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("axis 1 (in_channels)") != std::string::npos);
    }
    CHECK_THROWS_AS(conv1d_dilated(Tensor({1, 2}), Tensor({1, 1, 3}), Tensor({1}), ConvSpec{1, 1, 3, 2, 0}),
                    DimensionError);
}

TEST_CASE("matmul examples") {
    Rng rng(13);
    const Tensor b = randn(rng, {3, 4});
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1;
    CHECK(matmul(eye, b) == b);
    CHECK(matmul(tensor({2, 2}, {1, 2, 3, 4}), tensor({2, 1}, {5, 6})) == tensor({2, 1}, {17, 39}));
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("matmul and dense match the oracles") {
    Rng rng(14);
    for (int c = 0; c < 20; ++c) {
        const D a = randn<double>(rng, {8, 8}), b = randn<double>(rng, {8, 8}), bias = randn<double>(rng, {8});
        CHECK(test::max_abs_diff(matmul(a, b), oracle::matmul(a, b)) <= 1e-6);
        CHECK(test::max_abs_diff(dense(a, b, bias), oracle::dense(a, b, bias)) <= 1e-6);
    }
}

TEST_CASE("softmax rows") {
    const Tensor u = softmax_rows(tensor({1, 3}, {0, 0, 0}));
    for (float v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
    const Tensor big = softmax_rows(tensor({1, 2}, {1000, 0}));
    CHECK(std::abs(big[0] - 1.0f) <= 1e-6);
    CHECK(std::abs(big[1]) <= 1e-6);

    Rng rng(15);
    const Tensor a = randn(rng, {20, 9}, 5.0);
    const Tensor s = softmax_rows(a);
    Tensor shifted = a;
    for (std::size_t i = 0; i < 20; ++i) {
        for (std::size_t j = 0; j < 9; ++j) shifted.at(i, j) += static_cast<float>(i) - 7.5f;
    }
    const Tensor s2 = softmax_rows(shifted);
    for (std::size_t i = 0; i < 20; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 9; ++j) {
            CHECK(s.at(i, j) >= 0.0f);
            sum += s.at(i, j);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-5);
    }
    CHECK(test::max_abs_diff(s, s2) <= 1e-6);
}

TEST_CASE("dense examples") {
    CHECK(dense(tensor({1, 1}, {3}), tensor({1, 1}, {2}), tensor({1}, {1}))[0] == 7.0f);
    Rng rng(16);
    const Tensor x = randn(rng, {4, 3});
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1;
    CHECK(dense(x, eye, Tensor({3})) == x);
    // Leading axes act as a batch.
    const Tensor v = dense(tensor({2}, {1, 2}), tensor({2, 1}, {3, 4}), tensor({1}, {0.5f}));
    CHECK(v.shape() == Shape{1});
    CHECK(v[0] == 11.5f);
    CHECK_THROWS_AS(dense(x, Tensor({4, 2}), Tensor({2})), DimensionError);
}

TEST_CASE("layer norm") {
    const Tensor gain = tensor({2}, {1, 1}), shift({2});
    const Tensor y = layer_norm(tensor({1, 2}, {1, 3}), gain, shift);
    CHECK(std::abs(y[0] + 1.0f) <= 1e-3);
    CHECK(std::abs(y[1] - 1.0f) <= 1e-3);
    const Tensor c = layer_norm(tensor({1, 4}, {5, 5, 5, 5}), Tensor({4}, 1.0f), Tensor({4}));
    for (float v : c.data()) CHECK(v == 0.0f);

    Rng rng(17);
    const D x = randn<double>(rng, {10, 16}, 3.0), g = randn<double>(rng, {16}), s = randn<double>(rng, {16});
    const D n = layer_norm(x, D({16}, 1.0), D({16}));
    for (std::size_t i = 0; i < 10; ++i) {
        double mean = 0;
        for (std::size_t j = 0; j < 16; ++j) mean += n.at(i, j);
        CHECK(std::abs(mean / 16) < 1e-5);
    }
    CHECK(test::max_abs_diff(layer_norm(x, g, s), oracle::layer_norm(x, g, s, 1e-5)) <= 1e-6);
}

TEST_CASE("relu") {
    const Tensor x = tensor({3}, {-1, 0, 2});
    CHECK(relu(x) == tensor({3}, {0, 0, 2}));
    Rng rng(18);
    const Tensor r = randn(rng, {5, 5});
    CHECK(relu(relu(r)) == relu(r));
    const Tensor g = relu_backward(tensor({3}, {-1, 0.5f, 2}), tensor({3}, {7, 7, 7}));
    CHECK(g == tensor({3}, {0, 7, 7}));
}

TEST_CASE("pooling, transpose, concat and slices") {
    const Tensor x = tensor({2, 4}, {1, 3, 5, 7, 2, 2, 4, 8});
    CHECK(avg_pool_time(x, 2) == tensor({2, 2}, {2, 6, 2, 6}));
    CHECK_THROWS_AS(avg_pool_time(tensor({1, 3}, {1, 2, 3}), 2), DimensionError);
    CHECK(avg_pool_time_backward(tensor({1, 2}, {2, 4}), 2) == tensor({1, 4}, {1, 1, 2, 2}));
    CHECK(transpose(tensor({2, 3}, {1, 2, 3, 4, 5, 6})) == tensor({3, 2}, {1, 4, 2, 5, 3, 6}));

    const Tensor a = tensor({1, 2}, {1, 2}), b = tensor({2, 2}, {3, 4, 5, 6});
    const Tensor* rows[] = {&a, &b};
    CHECK(concat_rows<float>(rows) == tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    const Tensor c = tensor({2, 1}, {9, 8});
    const Tensor* cols[] = {&b, &c};
    CHECK(concat_cols<float>(cols) == tensor({2, 3}, {3, 4, 9, 5, 6, 8}));
    CHECK(slice_cols(b, 1, 1) == tensor({2, 1}, {4, 6}));
    CHECK(slice_rows(b, 1, 1) == tensor({1, 2}, {5, 6}));
    CHECK_THROWS_AS(slice_cols(b, 1, 2), DimensionError);
}

TEST_CASE("kernels are pure") {
    Rng rng(19);
    const Tensor x = randn(rng, {3, 40}), w = randn(rng, {4, 3, 3}), b = randn(rng, {4});
    const ConvSpec s{3, 4, 3, 2, 2};
    CHECK(conv1d_dilated(x, w, b, s) == conv1d_dilated(x, w, b, s));
    const Tensor gy = randn(rng, {4, 40});
    const auto g1 = conv1d_dilated_backward(x, w, s, gy), g2 = conv1d_dilated_backward(x, w, s, gy);
    CHECK(g1.input == g2.input);
    CHECK(g1.weights == g2.weights);
}

TEST_CASE("tensor construction rejects zero dimensions and bad lengths") {
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
}
