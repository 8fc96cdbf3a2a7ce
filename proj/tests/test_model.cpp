#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pulse/model.hpp"
#include "pulse/oracles.hpp"
#include "pulse/preprocess.hpp"
#include "pulse/selftest.hpp"
#include "support.hpp"

using namespace pulse;
using D = BasicTensor<double>;

namespace {

PulseConfig reduced_config() {
    PulseConfig c;
    c.block_channels = {8, 12, 16};
    c.d_model = 16;
    return c;
}

void randomize(PulseParams& p, std::uint64_t seed, double scale = 0.1) {
    Rng rng(seed);
    for (Tensor& t : p.tensors) {
        for (auto& v : t.data()) v += static_cast<float>(scale * rng.normal());
    }
}

D wide(const PulseParams& p, std::string_view name) { return p.tensors[p.slot(name)].cast<double>(); }

oracle::AttentionWeights attention_weights(const PulseParams& p) {
    return {wide(p, "attn.query.weight"), wide(p, "attn.query.bias"),  wide(p, "attn.key.weight"),
            wide(p, "attn.key.bias"),     wide(p, "attn.value.weight"), wide(p, "attn.value.bias"),
            wide(p, "attn.output.weight"), wide(p, "attn.output.bias")};
}

// relu(conv) x3 then average pooling, per block, from the loop oracles.
D features_oracle(const PulseParams& p, const D& stream, const std::string& prefix) {
    const PulseConfig& c = p.config;
    const std::size_t pad = (c.kernel_size - 1) * c.dilation / 2;
    D x = stream;
    for (std::size_t b = 0; b < c.block_channels.size(); ++b) {
        for (std::size_t k = 0; k < c.convs_per_block; ++k) {
            const std::string base = prefix + ".block" + std::to_string(b) + ".conv" + std::to_string(k);
            x = oracle::conv1d(x, wide(p, base + ".weight"), wide(p, base + ".bias"), c.dilation, pad);
            for (auto& v : x.data()) v = std::max(v, 0.0);
        }
        D pooled({x.dim(0), x.dim(1) / c.pool_factor});
        for (std::size_t ch = 0; ch < pooled.dim(0); ++ch) {
            for (std::size_t t = 0; t < pooled.dim(1); ++t) {
                double s = 0;
                for (std::size_t j = 0; j < c.pool_factor; ++j) s += x.at(ch, t * c.pool_factor + j);
                pooled.at(ch, t) = s / static_cast<double>(c.pool_factor);
            }
        }
        x = pooled;
    }
    D seq({x.dim(1), x.dim(0)});
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        for (std::size_t t = 0; t < x.dim(1); ++t) seq.at(t, i) = x.at(i, t);
    }
    return seq;
}

}  // namespace

TEST_CASE("default parameter count by hand") {
    // Per extractor: block0 1->32, block1 32->48, block2 48->64, kernel 3.
    const std::size_t block0 = (32 * 1 * 3 + 32) + 2 * (32 * 32 * 3 + 32);
    const std::size_t block1 = (48 * 32 * 3 + 48) + 2 * (48 * 48 * 3 + 48);
    const std::size_t block2 = (64 * 48 * 3 + 64) + 2 * (64 * 64 * 3 + 64);
    const std::size_t extractors = 2 * (block0 + block1 + block2);
    const std::size_t attention = 3 * (64 * 64 + 64) + (64 * 64 + 64);
    const std::size_t norm = 2 * 64, head = (64 * 128 + 128) + (128 + 1);
    CHECK(param_count(PulseConfig{}) == extractors + attention + norm + head);
    CHECK(param_count(PulseConfig{}) == 143009);
}

TEST_CASE("param_count agrees with the layout for many configs") {
    Rng rng(51);
    for (int i = 0; i < 40; ++i) {
        PulseConfig c;
        c.block_channels = {1 + rng.below(9), 1 + rng.below(9)};
        c.convs_per_block = 1 + rng.below(3);
        c.kernel_size = 1 + 2 * rng.below(3);
        c.heads = 1 + rng.below(3);
        c.d_model = c.heads * (1 + rng.below(4));
        c.head_hidden = 1 + rng.below(20);
        c.ppg_channels = 1 + rng.below(2);
        c.attention_mode = static_cast<AttentionMode>(rng.below(4));
        std::size_t n = 0;
        for (const ParamSpec& s : param_layout(c)) n += shape_size(s.shape);
        CHECK(param_count(c) == n);
        CHECK(init_params(c, 1).element_count() == n);
    }
}

TEST_CASE("attention modes with PPG queries or PPG self-attention have equal counts") {
    PulseConfig a, b;
    b.attention_mode = AttentionMode::MhsaPpgOnly;
    CHECK(param_count(a) == param_count(b));
    const PulseParams pa = init_params(a, 9), pb = init_params(b, 9);
    CHECK(pa.tensors == pb.tensors);
}

TEST_CASE("init is deterministic and bounded") {
    const PulseConfig c = reduced_config();
    const PulseParams a = init_params(c, 5), b = init_params(c, 5), other = init_params(c, 6);
    CHECK(a.tensors == b.tensors);
    CHECK(a.tensors != other.tensors);
    const auto layout = param_layout(c);
    for (std::size_t s = 0; s < layout.size(); ++s) {
        // Weights that feed a ReLU: every conv and the hidden head layer.
        const std::string& name = layout[s].name;
        const bool relu = layout[s].kind == ParamKind::Weight &&
                          (name.find(".conv") != std::string::npos || name == "head.hidden.weight");
        CHECK(layout[s].relu_follows == relu);
        const double bound = std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(layout[s].fan_in));
        CHECK(init_bound(layout[s]) == doctest::Approx(bound));
        for (float v : a.tensors[s].data()) {
            switch (layout[s].kind) {
                case ParamKind::Weight: CHECK(std::abs(v) < bound); break;
                case ParamKind::Gain: CHECK(v == 1.0f); break;
                default: CHECK(v == 0.0f);
            }
        }
    }
}

TEST_CASE("config validation and json round trip") {
    PulseConfig c = reduced_config();
    c.attention_mode = AttentionMode::MhsaConcat;
    c.ppg_channels = 2;
    CHECK(config_from_json(config_to_json(c)) == c);
    for (AttentionMode m : {AttentionMode::MhcaPpgQuery, AttentionMode::MhcaPpgKeyValue, AttentionMode::MhsaPpgOnly,
                            AttentionMode::MhsaConcat}) {
        CHECK(attention_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(attention_mode_from_string("nope"), std::invalid_argument);

    PulseConfig bad;
    bad.d_model = 30;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = PulseConfig{};
    bad.kernel_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = PulseConfig{};
    bad.dilation = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("features of a zero input with zero biases are zero") {
    const PulseConfig c = reduced_config();
    const PulseParams p = init_params(c, 3);
    const Tensor f = extract_features(p, Tensor({1, 256}), Stream::Ppg);
    CHECK(f.shape() == Shape{32, 16});
    for (float v : f.data()) CHECK(v == 0.0f);
}

TEST_CASE("default extractor maps a 1x256 PPG window to 32 embeddings of width 64") {
    const PulseParams p = init_params(PulseConfig{}, 3);
    Rng rng(52);
    CHECK(extract_features(p, test::randn(rng, {1, 256}), Stream::Ppg).shape() == Shape{32, 64});
    CHECK_THROWS_AS(extract_features(p, Tensor({2, 256}), Stream::Acc), DimensionError);
}

TEST_CASE("extract_features equals the composed oracle ops") {
    PulseConfig c = reduced_config();
    c.ppg_channels = 2;
    PulseParams p = init_params(c, 4);
    randomize(p, 53);
    Rng rng(54);
    for (const auto& [which, prefix, rows] : {std::tuple{Stream::Ppg, "ppg", 2}, std::tuple{Stream::Acc, "acc", 1}}) {
        const Tensor x = test::randn(rng, {static_cast<std::size_t>(rows), 256});
        const Tensor got = extract_features(p, x, which);
        const D want = features_oracle(p, x.cast<double>(), prefix);
        REQUIRE(got.shape() == want.shape());
        CHECK(test::max_abs_diff(got, want) <= 1e-5);
    }
}

TEST_CASE("mhca against the brute-force oracle") {
    Rng rng(55);
    for (int i = 0; i < 10; ++i) {
        PulseConfig c = reduced_config();
        c.heads = std::size_t{1} << rng.below(3);
        PulseParams p = init_params(c, rng.next());
        randomize(p, rng.next());
        const Tensor q = test::randn(rng, {1 + rng.below(8), 16}), kv = test::randn(rng, {1 + rng.below(12), 16});
        const MhcaResult got = mhca(p, q, kv, true);
        const oracle::AttentionOut want = oracle::attention(q.cast<double>(), kv.cast<double>(), attention_weights(p), c.heads);
        CHECK(test::max_abs_diff(got.output, want.output) <= 1e-5);
        REQUIRE(got.attention->heads.size() == c.heads);
        for (std::size_t h = 0; h < c.heads; ++h) CHECK(test::max_abs_diff(got.attention->heads[h], want.weights[h]) <= 1e-5);
    }
}

TEST_CASE("mhca with a single key attends fully to it") {
    PulseParams p = init_params(reduced_config(), 6);
    randomize(p, 56);
    Rng rng(57);
    const Tensor q = test::randn(rng, {5, 16}), kv = test::randn(rng, {1, 16});
    const MhcaResult r = mhca(p, q, kv, true);
    for (const Tensor& a : r.attention->heads) {
        for (float v : a.data()) CHECK(v == 1.0f);
    }
    const Tensor v = dense(kv, p.tensors[p.slot("attn.value.weight")], p.tensors[p.slot("attn.value.bias")]);
    const Tensor e = dense(v, p.tensors[p.slot("attn.output.weight")], p.tensors[p.slot("attn.output.bias")]);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(r.output.at(i, j) - e[j]) <= 1e-5);
    }
}

TEST_CASE("zero query projection gives uniform attention") {
    PulseParams p = init_params(reduced_config(), 7);
    p.tensors[p.slot("attn.query.weight")].fill(0.0f);
    Rng rng(58);
    const MhcaResult r = mhca(p, test::randn(rng, {4, 16}), test::randn(rng, {10, 16}), true);
    for (const Tensor& a : r.attention->heads) {
        for (float v : a.data()) CHECK(std::abs(v - 0.1f) <= 1e-6);
    }
}

TEST_CASE("mhca output is unchanged by permuting key/value rows") {
    PulseParams p = init_params(reduced_config(), 8);
    randomize(p, 59);
    Rng rng(60);
    const Tensor q = test::randn(rng, {6, 16}), kv = test::randn(rng, {12, 16});
    std::vector<std::size_t> perm(12);
    for (std::size_t i = 0; i < 12; ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor shuffled({12, 16});
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 16; ++j) shuffled.at(i, j) = kv.at(perm[i], j);
    }
    CHECK(test::max_abs_diff(mhca(p, q, kv, false).output, mhca(p, q, shuffled, false).output) <= 1e-5);
}

TEST_CASE("forward is deterministic and exposes the segmented map") {
    const PulseParams p = init_params(PulseConfig{}, 10);
    Rng rng(61);
    const Tensor x = test::randn(rng, {4, 256});
    const ForwardResult a = forward(p, x, true), b = forward(p, x, true);
    CHECK(a.hr_bpm == b.hr_bpm);
    REQUIRE(a.attention);
    CHECK(a.attention->heads.size() == 4);
    for (const Tensor& h : a.attention->heads) CHECK(h.shape() == Shape{32, 96});
    const auto& cols = a.attention->col_segments;
    REQUIRE(cols.size() == 3);
    CHECK(cols[0].name == "acc_x");
    CHECK(cols[2].name == "acc_z");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(cols[i].begin == 32 * i);
        CHECK(cols[i].end == 32 * (i + 1));
    }
    CHECK(a.attention->row_segments.size() == 1);
    CHECK_FALSE(forward(p, x).attention);
}

TEST_CASE("map shapes follow the attention mode") {
    Rng rng(62);
    const Tensor x = test::randn(rng, {4, 256});
    const std::pair<AttentionMode, Shape> cases[] = {{AttentionMode::MhcaPpgQuery, {32, 96}},
                                                     {AttentionMode::MhcaPpgKeyValue, {96, 32}},
                                                     {AttentionMode::MhsaPpgOnly, {32, 32}},
                                                     {AttentionMode::MhsaConcat, {128, 128}}};
    for (const auto& [mode, shape] : cases) {
        PulseConfig c = reduced_config();
        c.attention_mode = mode;
        const ForwardResult r = forward(init_params(c, 11), x, true);
        CHECK(r.attention->heads[0].shape() == shape);
        CHECK(std::isfinite(r.hr_bpm));
    }
}

TEST_CASE("z-scored inputs reach the head without NaN and attention rows sum to one") {
    PulseParams p = init_params(reduced_config(), 12);
    randomize(p, 63, 0.05);
    Rng rng(64);
    for (int i = 0; i < 200; ++i) {
        const Tensor x = zscore(test::randn(rng, {4, 256}, 1.0 + 10 * rng.uniform()));
        const ForwardResult r = forward(p, x, true);
        REQUIRE(std::isfinite(r.hr_bpm));
        for (const Tensor& a : r.attention->heads) {
            for (std::size_t row = 0; row < a.dim(0); ++row) {
                double s = 0;
                for (std::size_t col = 0; col < a.dim(1); ++col) {
                    const float v = a.at(row, col);
                    CHECK((v >= 0.0f && v <= 1.0f));
                    s += v;
                }
                CHECK(std::abs(s - 1.0) <= 1e-5);
            }
        }
    }
}

TEST_CASE("forward errors") {
    PulseParams p = init_params(reduced_config(), 13);
    CHECK_THROWS_AS(forward(p, Tensor({3, 256})), DimensionError);
    CHECK_THROWS_AS(forward(p, Tensor({4, 200})), DimensionError);
    Tensor bad({4, 256});
    bad[7] = NAN;
    CHECK_THROWS_AS(forward(p, bad), NumericError);

    p.tensors[p.slot("acc.block1.conv2.weight")][0] = INFINITY;
    try {
        forward(p, Tensor({4, 256}, 1.0f));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.layer() == "acc.block1.conv2");
    }
}

TEST_CASE("32-bit forward tracks the 64-bit forward") {
    PulseParams p = init_params(reduced_config(), 14);
    randomize(p, 65, 0.05);
    Rng rng(66);
    std::vector<D> wide_params;
    for (const Tensor& t : p.tensors) wide_params.push_back(t.cast<double>());
    for (int i = 0; i < 5; ++i) {
        const Tensor x = test::randn(rng, {4, 256});
        const auto r = record_forward<double>(p.config, wide_params, x.cast<double>(), false);
        CHECK(std::abs(forward(p, x).hr_bpm - r.tape.value(r.output)[0]) <= 1e-4);
    }
}
