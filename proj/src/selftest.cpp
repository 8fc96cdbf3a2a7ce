#include "pulse/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "pulse/harness.hpp"
#include "pulse/oracles.hpp"
#include "pulse/rng.hpp"
#include "pulse/tensorcore.hpp"

namespace pulse {

namespace {

using Clock = std::chrono::steady_clock;
using D = BasicTensor<double>;

template <typename T>
BasicTensor<T> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
    return t;
}

// Max abs difference between a float result and a double reference.
double max_abs(const Tensor& got, const D& want) {
    if (got.shape() != want.shape()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]));
    }
    return worst;
}

D widen(const Tensor& t) { return t.cast<double>(); }

double rel_error(double analytic, double numeric) {
    // Floor keeps near-zero gradients from turning round-off into huge ratios.
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

template <typename F>
CheckResult timed(std::string name, F&& body) {
    CheckResult r;
    r.name = std::move(name);
    const auto t0 = Clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---- op gradient harness ------------------------------------------------

using Build = std::function<ad::Var(ad::Tape<double>&, std::span<const ad::Var>)>;

// Projects the op output onto a fixed random direction R, so the scalar is
// sum(out * R) and its gradient is backward(seed = R).
double op_max_rel_error(std::vector<D> inputs, const Build& build, Rng& rng) {
    auto run = [&](const std::vector<D>& in, ad::Tape<double>& tape) {
        std::vector<ad::Var> vars;
        for (std::size_t i = 0; i < in.size(); ++i) vars.push_back(tape.parameter(in[i], i));
        return build(tape, vars);
    };
    ad::Tape<double> tape;
    const ad::Var out = run(inputs, tape);
    const D proj = random_tensor<double>(rng, tape.value(out).shape());
    const auto grads = tape.gradients(out, proj, inputs.size());

    auto objective = [&](const std::vector<D>& in) {
        ad::Tape<double> t;
        const D& y = t.value(run(in, t));
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    const double eps = 1e-3;
    double worst = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        for (std::size_t i = 0; i < inputs[s].size(); ++i) {
            const double keep = inputs[s][i];
            inputs[s][i] = keep + eps;
            const double up = objective(inputs);
            inputs[s][i] = keep - eps;
            const double down = objective(inputs);
            inputs[s][i] = keep;
            const double numeric = (up - down) / (2 * eps);
            const double analytic = grads[s].empty() ? 0.0 : grads[s][i];
            worst = std::max(worst, rel_error(analytic, numeric));
        }
    }
    return worst;
}

// Values with |v| >= margin, so kinks at zero are not crossed by +-eps.
D away_from_zero(Rng& rng, Shape shape, double margin) {
    D t = random_tensor<double>(rng, std::move(shape));
    for (auto& v : t.data()) v = v >= 0 ? v + margin : v - margin;
    return t;
}

}  // namespace

std::string format_result(const CheckResult& r) {
    char tail[48];
    std::snprintf(tail, sizeof tail, " (%.2f s)", r.seconds);
    return std::string(r.passed ? "PASS  " : "FAIL  ") + r.name + "  " + r.detail + tail;
}

PulseConfig tiny_config() {
    PulseConfig c;
    c.block_channels = {4, 6, 8};
    c.d_model = 8;
    return c;
}

CheckResult check_kernel_oracles(std::uint64_t seed, std::size_t cases) {
    return timed("kernel oracles", [&](CheckResult& r) {
        Rng rng(seed);
        double conv_err = 0, mm_err = 0, dense_err = 0, softmax_err = 0, norm_err = 0, attn_err = 0;
        for (std::size_t c = 0; c < cases; ++c) {
            {
                const std::size_t k = 1 + rng.below(5), d = 1 + rng.below(3);
                const std::size_t reach = (k - 1) * d;
                const std::size_t pad = rng.below(reach + 1);
                const std::size_t cin = 1 + rng.below(5), cout = 1 + rng.below(5);
                const std::size_t len = reach + 1 + rng.below(40);
                const Tensor x = random_tensor<float>(rng, {cin, len});
                const Tensor w = random_tensor<float>(rng, {cout, cin, k});
                const Tensor b = random_tensor<float>(rng, {cout});
                const Tensor y = conv1d_dilated(x, w, b, ConvSpec{cin, cout, k, d, pad});
                conv_err = std::max(conv_err, max_abs(y, oracle::conv1d(widen(x), widen(w), widen(b), d, pad)));
            }
            {
                const std::size_t m = 1 + rng.below(12), n = 1 + rng.below(12), p = 1 + rng.below(12);
                const Tensor a = random_tensor<float>(rng, {m, n});
                const Tensor b = random_tensor<float>(rng, {n, p});
                mm_err = std::max(mm_err, max_abs(matmul(a, b), oracle::matmul(widen(a), widen(b))));
                const Tensor bias = random_tensor<float>(rng, {p});
                dense_err = std::max(dense_err, max_abs(dense(a, b, bias), oracle::dense(widen(a), widen(b), widen(bias))));
                const Tensor logits = random_tensor<float>(rng, {m, n}, 4.0);
                softmax_err = std::max(softmax_err, max_abs(softmax_rows(logits), oracle::softmax_rows(widen(logits))));
                const Tensor gain = random_tensor<float>(rng, {n}), shift = random_tensor<float>(rng, {n});
                norm_err = std::max(norm_err, max_abs(layer_norm(a, gain, shift),
                                                      oracle::layer_norm(widen(a), widen(gain), widen(shift), 1e-5)));
            }
            {
                PulseConfig cfg = tiny_config();
                cfg.heads = 1 + rng.below(4);
                cfg.d_model = cfg.heads * (1 + rng.below(4));
                cfg.block_channels = {2 + rng.below(10)};
                PulseParams p = init_params(cfg, rng.next());
                for (Tensor& t : p.tensors) t = random_tensor<float>(rng, t.shape(), 0.5);
                const std::size_t f = cfg.feature_dim();
                const Tensor q = random_tensor<float>(rng, {1 + rng.below(10), f});
                const Tensor kv = random_tensor<float>(rng, {1 + rng.below(12), f});
                const MhcaResult got = mhca(p, q, kv, true);
                auto w = [&](const char* name) { return widen(p.tensors[p.slot(name)]); };
                const oracle::AttentionWeights aw{w("attn.query.weight"), w("attn.query.bias"),
                                                  w("attn.key.weight"),   w("attn.key.bias"),
                                                  w("attn.value.weight"), w("attn.value.bias"),
                                                  w("attn.output.weight"), w("attn.output.bias")};
                const oracle::AttentionOut want = oracle::attention(widen(q), widen(kv), aw, cfg.heads);
                attn_err = std::max(attn_err, max_abs(got.output, want.output));
                for (std::size_t h = 0; h < cfg.heads; ++h) {
                    attn_err = std::max(attn_err, max_abs(got.attention->heads.at(h), want.weights.at(h)));
                }
            }
        }
        const double worst = std::max({conv_err, mm_err, dense_err, softmax_err, norm_err, attn_err});
        r.passed = worst <= 1e-5;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "%zu cases each; max abs err conv %.2e matmul %.2e dense %.2e softmax %.2e layer_norm %.2e "
                      "attention %.2e (limit 1e-5)",
                      cases, conv_err, mm_err, dense_err, softmax_err, norm_err, attn_err);
        r.detail = buf;
    });
}

CheckResult check_op_gradients(std::uint64_t seed) {
    return timed("op gradients", [&](CheckResult& r) {
        Rng rng(seed);
        using V = std::span<const ad::Var>;
        using Tp = ad::Tape<double>;
        struct Case {
            const char* name;
            std::vector<D> inputs;
            Build build;
        };
        std::vector<Case> cases;
        cases.push_back({"conv1d",
                         {random_tensor<double>(rng, {2, 11}), random_tensor<double>(rng, {3, 2, 3}),
                          random_tensor<double>(rng, {3})},
                         [](Tp& t, V v) { return t.conv1d(v[0], v[1], v[2], ConvSpec{2, 3, 3, 2, 2}); }});
        cases.push_back({"matmul",
                         {random_tensor<double>(rng, {3, 4}), random_tensor<double>(rng, {4, 2})},
                         [](Tp& t, V v) { return t.matmul(v[0], v[1]); }});
        cases.push_back({"dense",
                         {random_tensor<double>(rng, {3, 4}), random_tensor<double>(rng, {4, 5}),
                          random_tensor<double>(rng, {5})},
                         [](Tp& t, V v) { return t.dense(v[0], v[1], v[2]); }});
        cases.push_back({"softmax_rows", {random_tensor<double>(rng, {3, 5})},
                         [](Tp& t, V v) { return t.softmax_rows(v[0]); }});
        cases.push_back({"layer_norm",
                         {random_tensor<double>(rng, {3, 6}), random_tensor<double>(rng, {6}),
                          random_tensor<double>(rng, {6})},
                         [](Tp& t, V v) { return t.layer_norm(v[0], v[1], v[2]); }});
        cases.push_back({"relu", {away_from_zero(rng, {3, 4}, 0.05)}, [](Tp& t, V v) { return t.relu(v[0]); }});
        cases.push_back({"avg_pool_time", {random_tensor<double>(rng, {2, 8})},
                         [](Tp& t, V v) { return t.avg_pool_time(v[0], 2); }});
        cases.push_back({"transpose", {random_tensor<double>(rng, {2, 5})},
                         [](Tp& t, V v) { return t.transpose(v[0]); }});
        cases.push_back({"concat_rows",
                         {random_tensor<double>(rng, {2, 3}), random_tensor<double>(rng, {4, 3})},
                         [](Tp& t, V v) { return t.concat_rows(v); }});
        cases.push_back({"concat_cols",
                         {random_tensor<double>(rng, {3, 2}), random_tensor<double>(rng, {3, 1})},
                         [](Tp& t, V v) { return t.concat_cols(v); }});
        cases.push_back({"slice_cols", {random_tensor<double>(rng, {3, 6})},
                         [](Tp& t, V v) { return t.slice_cols(v[0], 2, 3); }});
        cases.push_back({"scale", {random_tensor<double>(rng, {2, 3})},
                         [](Tp& t, V v) { return t.scale(v[0], -1.7); }});
        cases.push_back({"add",
                         {random_tensor<double>(rng, {2, 3}), random_tensor<double>(rng, {2, 3})},
                         [](Tp& t, V v) { return t.add(v[0], v[1]); }});
        cases.push_back({"mean_rows", {random_tensor<double>(rng, {4, 3})},
                         [](Tp& t, V v) { return t.mean_rows(v[0]); }});
        cases.push_back({"sum", {random_tensor<double>(rng, {2, 3})}, [](Tp& t, V v) { return t.sum(v[0]); }});
        cases.push_back({"pick", {random_tensor<double>(rng, {2, 3})}, [](Tp& t, V v) { return t.pick(v[0], 4); }});
        {
            D target = random_tensor<double>(rng, {6});
            D pred = away_from_zero(rng, {6}, 0.05);
            for (std::size_t i = 0; i < 6; ++i) pred[i] += target[i];
            cases.push_back({"l1_loss", {pred, target}, [](Tp& t, V v) { return t.l1_loss(v[0], v[1]); }});
        }

        double worst = 0.0;
        std::string worst_op = "-";
        for (const Case& c : cases) {
            const double e = op_max_rel_error(c.inputs, c.build, rng);
            if (e > worst) worst = e, worst_op = c.name;
        }
        r.passed = worst < 1e-4;
        r.detail = std::to_string(cases.size()) + " ops; max rel err " + fmt("%.2e", worst) + " (" + worst_op +
                   ", limit 1e-4)";
    });
}

CheckResult check_model_gradients(const PulseConfig& config, std::uint64_t seed) {
    return timed("model gradients (64-bit)", [&](CheckResult& r) {
        Rng rng(seed);
        const PulseParams init = init_params(config, rng.next());
        std::vector<D> params;
        for (const Tensor& t : init.tensors) params.push_back(t.cast<double>());
        // Nonzero biases so every bias path carries signal.
        for (D& t : params) {
            for (auto& v : t.data()) v += 0.05 * rng.normal();
        }
        const D window = random_tensor<double>(rng, {config.input_channels(), config.window_length});

        auto rec = record_forward<double>(config, params, window, false);
        const auto grads = rec.tape.gradients(rec.output, D({1}, 1.0), params.size());
        auto output = [&] {
            const auto fwd = record_forward<double>(config, params, window, false);
            return fwd.tape.value(fwd.output)[0];
        };

        // A ReLU kink inside the +-eps interval corrupts the central
        // difference; shrinking the step moves the probe off the kink. If
        // the kink still sits inside the interval, the two one-sided
        // differences disagree and the analytic value must match the side
        // that does not cross it.
        const double steps[] = {1e-6, 1e-7, 1e-8};
        const double base = output();
        const auto layout = param_layout(config);
        double worst = 0.0;
        std::string worst_name = "-";
        std::size_t checked = 0, retried = 0, kinks = 0;
        for (std::size_t s = 0; s < params.size(); ++s) {
            for (std::size_t i = 0; i < params[s].size(); ++i) {
                const double keep = params[s][i];
                double e = INFINITY;
                for (const double eps : steps) {
                    params[s][i] = keep + eps;
                    const double up = output();
                    params[s][i] = keep - eps;
                    const double down = output();
                    params[s][i] = keep;
                    e = std::min(e, rel_error(grads[s][i], (up - down) / (2 * eps)));
                    if (e < 1e-4) break;
                    const double right = (up - base) / eps, left = (base - down) / eps;
                    if (rel_error(right, left) >= 1e-3) {
                        const double side = std::min(rel_error(grads[s][i], right), rel_error(grads[s][i], left));
                        if (side < 1e-4) {
                            e = side;
                            ++kinks;
                            break;
                        }
                    }
                    ++retried;
                }
                if (e > worst) worst = e, worst_name = layout[s].name + "[" + std::to_string(i) + "]";
                ++checked;
            }
        }
        r.passed = worst < 1e-4;
        r.detail = std::to_string(checked) + " parameters; max rel err " + fmt("%.2e", worst) + " at " + worst_name +
                   " (limit 1e-4); " + std::to_string(retried) + " smaller-step retries, " +
                   std::to_string(kinks) + " one-sided at a kink";
    });
}

CheckResult check_attention_rows(const PulseConfig& config, std::uint64_t seed, std::size_t windows) {
    return timed("attention row sums", [&](CheckResult& r) {
        Rng rng(seed);
        const PulseParams params = init_params(config, rng.next());
        double worst = 0.0;
        std::size_t rows = 0;
        for (std::size_t w = 0; w < windows; ++w) {
            const Tensor x = random_tensor<float>(rng, {config.input_channels(), config.window_length});
            const ForwardResult f = forward(params, x, true);
            for (const Tensor& a : f.attention->heads) {
                for (std::size_t i = 0; i < a.dim(0); ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < a.dim(1); ++j) s += a.at(i, j);
                    worst = std::max(worst, std::abs(s - 1.0));
                    ++rows;
                }
            }
        }
        r.passed = worst <= 1e-5;
        r.detail = std::to_string(windows) + " windows, " + std::to_string(rows) + " rows; max |sum-1| " +
                   fmt("%.2e", worst) + " (limit 1e-5)";
    });
}

CheckResult check_postprocess(std::uint64_t seed, std::size_t streams) {
    return timed("post-processing band", [&](CheckResult& r) {
        Rng rng(seed);
        std::size_t values = 0, violations = 0, identity_breaks = 0;
        for (std::size_t s = 0; s < streams; ++s) {
            const std::size_t n = 1 + rng.below(200);
            std::vector<float> in(n);
            double level = rng.uniform(40, 180);
            const double jump = rng.uniform(0, 0.4);
            for (auto& v : in) {
                level = std::max(20.0, level + rng.normal() * 2.0);
                v = static_cast<float>(level * (1.0 + jump * rng.uniform(-1, 1)));
            }
            const auto out = postprocess_clip(in);
            if (out.size() != n || out[0] != in[0]) ++violations;
            for (std::size_t t = 1; t < n; ++t) {
                const std::size_t from = t > kClipHistory ? t - kClipHistory : 0;
                double a = 0.0;
                for (std::size_t k = from; k < t; ++k) a += out[k];
                a /= static_cast<double>(t - from);
                if (std::abs(out[t] - a) > 0.1 * a + 1e-9) ++violations;
                if (std::abs(in[t] - a) <= 0.1 * a && out[t] != in[t]) ++identity_breaks;
                ++values;
            }
        }
        r.passed = violations == 0 && identity_breaks == 0;
        r.detail = std::to_string(streams) + " streams, " + std::to_string(values) + " values; band violations " +
                   std::to_string(violations) + ", in-band changes " + std::to_string(identity_breaks);
    });
}

CheckResult check_model_health(const PulseParams& params, std::uint64_t seed) {
    return timed("model health", [&](CheckResult& r) {
        const auto layout = param_layout(params.config);
        for (std::size_t s = 0; s < layout.size(); ++s) {
            if (!params.tensors.at(s).all_finite()) {
                const std::string& name = layout[s].name;
                const std::string layer = name.substr(0, name.rfind('.'));
                r.passed = false;
                r.detail = "layer " + layer + ": non-finite values in " + name;
                return;
            }
        }
        Rng rng(seed);
        const PulseConfig& c = params.config;
        for (int w = 0; w < 8; ++w) {
            const Tensor x = random_tensor<float>(rng, {c.input_channels(), c.window_length});
            try {
                forward(params, x);
            } catch (const NumericError& e) {
                r.passed = false;
                r.detail = "layer " + e.layer() + ": " + e.what();
                return;
            }
        }
        r.passed = true;
        r.detail = std::to_string(layout.size()) + " tensors finite; forward finite on 8 random windows";
    });
}

std::vector<CheckResult> run_selftest(const PulseParams* params, std::uint64_t seed) {
    PulseConfig reduced;
    reduced.block_channels = {8, 12, 16};
    reduced.d_model = 16;
    std::vector<CheckResult> out;
    out.push_back(check_kernel_oracles(seed, 100));
    out.push_back(check_op_gradients(seed));
    out.push_back(check_model_gradients(tiny_config(), seed));
    out.push_back(check_attention_rows(reduced, seed, 200));
    out.push_back(check_postprocess(seed, 2000));
    if (params) out.push_back(check_model_health(*params, seed));
    return out;
}

}  // namespace pulse
