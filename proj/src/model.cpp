#include "pulse/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pulse/rng.hpp"

namespace pulse {

std::string_view to_string(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::MhcaPpgQuery: return "MHCA_PPG_Q";
        case AttentionMode::MhcaPpgKeyValue: return "MHCA_PPG_KV";
        case AttentionMode::MhsaPpgOnly: return "MHSA_PPG_ONLY";
        case AttentionMode::MhsaConcat: return "MHSA_CONCAT";
    }
    return "?";
}

AttentionMode attention_mode_from_string(std::string_view name) {
    for (auto m : {AttentionMode::MhcaPpgQuery, AttentionMode::MhcaPpgKeyValue, AttentionMode::MhsaPpgOnly,
                   AttentionMode::MhsaConcat}) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown attention_mode '" + std::string(name) + "'");
}

void PulseConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("PulseConfig: " + msg); };
    if (block_channels.empty()) fail("block_channels must not be empty");
    for (std::size_t c : block_channels) {
        if (c == 0) fail("block_channels entries must be positive");
    }
    if (convs_per_block == 0) fail("convs_per_block must be >= 1");
    if (kernel_size == 0) fail("kernel_size must be >= 1");
    if (dilation == 0) fail("dilation must be >= 1");
    if (((kernel_size - 1) * dilation) % 2 != 0) fail("(kernel_size-1)*dilation must be even for same padding");
    if (pool_factor == 0) fail("pool_factor must be >= 1");
    if (heads == 0 || d_model == 0 || d_model % heads != 0) fail("d_model must be a positive multiple of heads");
    if (head_hidden == 0) fail("head_hidden must be >= 1");
    if (ppg_channels == 0) fail("ppg_channels must be >= 1");
    if (acc_channels == 0) fail("acc_channels must be >= 1");
    std::size_t len = window_length;
    for (std::size_t b = 0; b < block_channels.size(); ++b) {
        if (len == 0 || len % pool_factor != 0) {
            fail("window_length " + std::to_string(window_length) + " not divisible by pool_factor at block " +
                 std::to_string(b));
        }
        len /= pool_factor;
    }
    if (len == 0) fail("window_length pools down to zero");
}

std::size_t PulseConfig::sequence_length() const {
    std::size_t len = window_length;
    for (std::size_t b = 0; b < block_channels.size(); ++b) len /= pool_factor;
    return len;
}

nlohmann::json config_to_json(const PulseConfig& c) {
    return {
        {"block_channels", c.block_channels},
        {"convs_per_block", c.convs_per_block},
        {"dilation", c.dilation},
        {"kernel_size", c.kernel_size},
        {"pool_factor", c.pool_factor},
        {"heads", c.heads},
        {"d_model", c.d_model},
        {"head_hidden", c.head_hidden},
        {"attention_mode", std::string(to_string(c.attention_mode))},
        {"ppg_channels", c.ppg_channels},
        {"acc_channels", c.acc_channels},
        {"window_length", c.window_length},
    };
}

PulseConfig config_from_json(const nlohmann::json& j) {
    PulseConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("block_channels", c.block_channels);
    get("convs_per_block", c.convs_per_block);
    get("dilation", c.dilation);
    get("kernel_size", c.kernel_size);
    get("pool_factor", c.pool_factor);
    get("heads", c.heads);
    get("d_model", c.d_model);
    get("head_hidden", c.head_hidden);
    if (j.contains("attention_mode")) c.attention_mode = attention_mode_from_string(j.at("attention_mode").get<std::string>());
    get("ppg_channels", c.ppg_channels);
    get("acc_channels", c.acc_channels);
    get("window_length", c.window_length);
    c.validate();
    return c;
}

namespace {

void add_extractor(std::vector<ParamSpec>& out, const PulseConfig& c, const std::string& prefix,
                   std::size_t in_channels) {
    std::size_t cin = in_channels;
    for (std::size_t b = 0; b < c.block_channels.size(); ++b) {
        const std::size_t cout = c.block_channels[b];
        for (std::size_t k = 0; k < c.convs_per_block; ++k) {
            const std::string base = prefix + ".block" + std::to_string(b) + ".conv" + std::to_string(k);
            out.push_back({base + ".weight", {cout, cin, c.kernel_size}, cin * c.kernel_size, ParamKind::Weight, true});
            out.push_back({base + ".bias", {cout}, cin * c.kernel_size, ParamKind::Bias});
            cin = cout;
        }
    }
}

void add_dense(std::vector<ParamSpec>& out, const std::string& base, std::size_t f_in, std::size_t f_out,
               bool relu_follows = false) {
    out.push_back({base + ".weight", {f_in, f_out}, f_in, ParamKind::Weight, relu_follows});
    out.push_back({base + ".bias", {f_out}, f_in, ParamKind::Bias});
}

std::size_t extractor_count(const PulseConfig& c, std::size_t in_channels) {
    std::size_t total = 0, cin = in_channels;
    for (std::size_t cout : c.block_channels) {
        total += cout * cin * c.kernel_size + cout;
        total += (c.convs_per_block - 1) * (cout * cout * c.kernel_size + cout);
        cin = cout;
    }
    return total;
}

}  // namespace

std::vector<ParamSpec> param_layout(const PulseConfig& c) {
    c.validate();
    std::vector<ParamSpec> out;
    add_extractor(out, c, "ppg", c.ppg_channels);
    add_extractor(out, c, "acc", 1);
    const std::size_t f = c.feature_dim();
    add_dense(out, "attn.query", f, c.d_model);
    add_dense(out, "attn.key", f, c.d_model);
    add_dense(out, "attn.value", f, c.d_model);
    add_dense(out, "attn.output", c.d_model, c.d_model);
    out.push_back({"norm.gain", {c.d_model}, c.d_model, ParamKind::Gain});
    out.push_back({"norm.shift", {c.d_model}, c.d_model, ParamKind::Shift});
    add_dense(out, "head.hidden", c.d_model, c.head_hidden, true);
    add_dense(out, "head.out", c.head_hidden, 1);
    return out;
}

std::size_t param_count(const PulseConfig& c) {
    c.validate();
    const std::size_t f = c.feature_dim(), d = c.d_model, h = c.head_hidden;
    return extractor_count(c, c.ppg_channels) + extractor_count(c, 1) + 3 * (f * d + d) + (d * d + d) + 2 * d +
           (d * h + h) + (h + 1);
}

std::size_t PulseParams::element_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

std::size_t PulseParams::slot(std::string_view name) const {
    const auto layout = param_layout(config);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].name == name) return i;
    }
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

double init_bound(const ParamSpec& spec) {
    return std::sqrt((spec.relu_follows ? 6.0 : 3.0) / static_cast<double>(spec.fan_in));
}

PulseParams init_params(const PulseConfig& config, std::uint64_t seed) {
    PulseParams p{config, {}};
    Rng rng(seed);
    for (const ParamSpec& spec : param_layout(config)) {
        Tensor t(spec.shape);
        switch (spec.kind) {
            case ParamKind::Weight: {
                const double a = init_bound(spec);
                for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-a, a));
                break;
            }
            case ParamKind::Gain: t.fill(1.0f); break;
            case ParamKind::Bias:
            case ParamKind::Shift: break;
        }
        p.tensors.push_back(std::move(t));
    }
    return p;
}

std::pair<std::vector<Segment>, std::vector<Segment>> attention_segments(const PulseConfig& c) {
    const std::size_t n = c.sequence_length();
    std::vector<Segment> ppg{{"ppg", 0, n}};
    std::vector<Segment> acc;
    static const char* axis_names[] = {"x", "y", "z"};
    for (std::size_t a = 0; a < c.acc_channels; ++a) {
        const std::string name = a < 3 ? std::string("acc_") + axis_names[a] : "acc_" + std::to_string(a);
        acc.push_back({name, a * n, (a + 1) * n});
    }
    switch (c.attention_mode) {
        case AttentionMode::MhcaPpgQuery: return {ppg, acc};
        case AttentionMode::MhcaPpgKeyValue: return {acc, ppg};
        case AttentionMode::MhsaPpgOnly: return {ppg, ppg};
        case AttentionMode::MhsaConcat: {
            std::vector<Segment> all = ppg;
            for (Segment s : acc) {
                s.begin += n;
                s.end += n;
                all.push_back(s);
            }
            return {all, all};
        }
    }
    return {};
}

namespace {

// Slot numbers of every tensor, resolved once from the layout order.
struct Slots {
    struct Conv {
        std::size_t weight, bias;
        ConvSpec spec;
        std::string name;
    };
    std::vector<std::vector<Conv>> ppg, acc;  // [block][conv]
    std::size_t q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, gain, shift, h_w, h_b, out_w, out_b;

    explicit Slots(const PulseConfig& c) {
        std::size_t slot = 0;
        const std::size_t pad = ConvSpec::same_padding(c.kernel_size, c.dilation);
        auto extractor = [&](std::vector<std::vector<Conv>>& dst, const std::string& prefix, std::size_t cin) {
            for (std::size_t b = 0; b < c.block_channels.size(); ++b) {
                dst.emplace_back();
                for (std::size_t k = 0; k < c.convs_per_block; ++k) {
                    const std::size_t cout = c.block_channels[b];
                    dst.back().push_back(Conv{slot, slot + 1, ConvSpec{cin, cout, c.kernel_size, c.dilation, pad},
                                              prefix + ".block" + std::to_string(b) + ".conv" + std::to_string(k)});
                    slot += 2;
                    cin = cout;
                }
            }
        };
        extractor(ppg, "ppg", c.ppg_channels);
        extractor(acc, "acc", 1);
        q_w = slot++, q_b = slot++, k_w = slot++, k_b = slot++, v_w = slot++, v_b = slot++;
        o_w = slot++, o_b = slot++, gain = slot++, shift = slot++;
        h_w = slot++, h_b = slot++, out_w = slot++, out_b = slot++;
    }
};

template <typename T>
void check_finite(const ad::Tape<T>& tape, ad::Var v, const std::string& layer) {
    if (!tape.value(v).all_finite()) throw NumericError(layer, "non-finite value produced by layer " + layer);
}

template <typename T>
struct Graph {
    const PulseConfig& config;
    const Slots& slots;
    ad::Tape<T>& tape;
    std::vector<ad::Var> params;

    Graph(const PulseConfig& c, const Slots& s, ad::Tape<T>& t, std::span<const BasicTensor<T>> values)
        : config(c), slots(s), tape(t) {
        const auto layout = param_layout(c);
        if (values.size() != layout.size()) {
            throw DimensionError("expected " + std::to_string(layout.size()) + " parameter tensors, got " +
                                 std::to_string(values.size()));
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i].shape() != layout[i].shape) {
                throw DimensionError("parameter " + layout[i].name + " has shape " +
                                     shape_string(values[i].shape()) + ", expected " +
                                     shape_string(layout[i].shape));
            }
            params.push_back(tape.parameter(values[i], i));
        }
    }

    ad::Var p(std::size_t slot) const { return params[slot]; }

    // [C,T] -> [T', F]
    ad::Var extract(ad::Var stream, Stream which) {
        const auto& blocks = which == Stream::Ppg ? slots.ppg : slots.acc;
        ad::Var x = stream;
        for (const auto& block : blocks) {
            for (const auto& conv : block) {
                x = tape.relu(tape.conv1d(x, p(conv.weight), p(conv.bias), conv.spec));
                check_finite(tape, x, conv.name);
            }
            x = tape.avg_pool_time(x, config.pool_factor);
        }
        return tape.transpose(x);
    }

    ad::Var attend(ad::Var q_stream, ad::Var kv_stream, std::vector<BasicTensor<T>>* capture) {
        ad::Var q = tape.dense(q_stream, p(slots.q_w), p(slots.q_b));
        ad::Var k = tape.dense(kv_stream, p(slots.k_w), p(slots.k_b));
        ad::Var v = tape.dense(kv_stream, p(slots.v_w), p(slots.v_b));
        const std::size_t dh = config.head_dim();
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<ad::Var> heads;
        for (std::size_t h = 0; h < config.heads; ++h) {
            ad::Var qh = tape.slice_cols(q, h * dh, dh);
            ad::Var kh = tape.slice_cols(k, h * dh, dh);
            ad::Var vh = tape.slice_cols(v, h * dh, dh);
            ad::Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
            ad::Var weights = tape.softmax_rows(scores);
            check_finite(tape, weights, "attn.head" + std::to_string(h));
            if (capture) capture->push_back(tape.value(weights));
            heads.push_back(tape.matmul(weights, vh));
        }
        ad::Var e = tape.dense(tape.concat_cols(heads), p(slots.o_w), p(slots.o_b));
        check_finite(tape, e, "attn.output");
        return e;
    }

    ad::Var channel_rows(const BasicTensor<T>& window, std::size_t begin, std::size_t count) {
        return tape.constant(pulse::slice_rows(window, begin, count));
    }

    ad::Var forward(const BasicTensor<T>& window, std::vector<BasicTensor<T>>* capture) {
        require_rank(window, 2, "forward window");
        if (window.dim(0) != config.input_channels()) {
            throw DimensionError("forward window axis 0 (channels): expected " +
                                 std::to_string(config.input_channels()) + ", got " + std::to_string(window.dim(0)));
        }
        if (window.dim(1) != config.window_length) {
            throw DimensionError("forward window axis 1 (time): expected " + std::to_string(config.window_length) +
                                 ", got " + std::to_string(window.dim(1)));
        }
        if (!window.all_finite()) throw NumericError("input", "non-finite value in input window");

        ad::Var ppg = extract(channel_rows(window, 0, config.ppg_channels), Stream::Ppg);
        auto acc_stream = [&] {
            std::vector<ad::Var> axes;
            for (std::size_t a = 0; a < config.acc_channels; ++a) {
                axes.push_back(extract(channel_rows(window, config.ppg_channels + a, 1), Stream::Acc));
            }
            return tape.concat_rows(axes);
        };

        ad::Var e;
        switch (config.attention_mode) {
            case AttentionMode::MhcaPpgQuery: e = attend(ppg, acc_stream(), capture); break;
            case AttentionMode::MhcaPpgKeyValue: e = attend(acc_stream(), ppg, capture); break;
            case AttentionMode::MhsaPpgOnly: e = attend(ppg, ppg, capture); break;
            case AttentionMode::MhsaConcat: {
                const ad::Var parts[] = {ppg, acc_stream()};
                const ad::Var joint = tape.concat_rows(parts);
                e = attend(joint, joint, capture);
                break;
            }
        }
        ad::Var normed = tape.layer_norm(e, p(slots.gain), p(slots.shift));
        check_finite(tape, normed, "norm");
        ad::Var pooled = tape.mean_rows(normed);
        ad::Var hidden = tape.relu(tape.dense(pooled, p(slots.h_w), p(slots.h_b)));
        check_finite(tape, hidden, "head.hidden");
        ad::Var out = tape.dense(hidden, p(slots.out_w), p(slots.out_b));
        check_finite(tape, out, "head.out");
        return out;
    }
};

}  // namespace

template <typename T>
RecordedForward<T> record_forward(const PulseConfig& config, std::span<const BasicTensor<T>> params,
                                  const BasicTensor<T>& window, bool capture) {
    const Slots slots(config);
    RecordedForward<T> r;
    Graph<T> g(config, slots, r.tape, params);
    r.output = g.forward(window, capture ? &r.attention : nullptr);
    return r;
}

template RecordedForward<float> record_forward(const PulseConfig&, std::span<const Tensor>, const Tensor&, bool);
template RecordedForward<double> record_forward(const PulseConfig&, std::span<const BasicTensor<double>>,
                                                const BasicTensor<double>&, bool);

Tensor extract_features(const PulseParams& params, const Tensor& stream, Stream which) {
    const PulseConfig& c = params.config;
    const std::size_t want = which == Stream::Ppg ? c.ppg_channels : 1;
    require_rank(stream, 2, "extract_features stream");
    if (stream.dim(0) != want) {
        throw DimensionError(std::string("extract_features axis 0 (channels) for ") +
                             (which == Stream::Ppg ? "ppg" : "acc") + ": expected " + std::to_string(want) +
                             ", got " + std::to_string(stream.dim(0)));
    }
    const Slots slots(c);
    ad::Tape<float> tape;
    Graph<float> g(c, slots, tape, params.tensors);
    return tape.value(g.extract(tape.constant(stream), which));
}

MhcaResult mhca(const PulseParams& params, const Tensor& q_stream, const Tensor& kv_stream, bool capture) {
    const PulseConfig& c = params.config;
    require_rank(q_stream, 2, "mhca q_stream");
    require_rank(kv_stream, 2, "mhca kv_stream");
    if (q_stream.dim(1) != c.feature_dim() || kv_stream.dim(1) != c.feature_dim()) {
        throw DimensionError("mhca axis 1 (features): expected " + std::to_string(c.feature_dim()) + ", got " +
                             std::to_string(q_stream.dim(1)) + " and " + std::to_string(kv_stream.dim(1)));
    }
    const Slots slots(c);
    ad::Tape<float> tape;
    Graph<float> g(c, slots, tape, params.tensors);
    std::vector<Tensor> maps;
    ad::Var out = g.attend(tape.constant(q_stream), tape.constant(kv_stream), capture ? &maps : nullptr);
    MhcaResult r{tape.value(out), std::nullopt};
    if (capture) {
        AttentionMap map;
        map.heads = std::move(maps);
        const std::size_t n_acc = c.acc_channels;
        if (kv_stream.dim(0) % n_acc == 0) {
            const std::size_t span = kv_stream.dim(0) / n_acc;
            static const char* axis_names[] = {"x", "y", "z"};
            for (std::size_t a = 0; a < n_acc; ++a) {
                map.col_segments.push_back(
                    {a < 3 ? std::string("acc_") + axis_names[a] : "acc_" + std::to_string(a), a * span, (a + 1) * span});
            }
        }
        map.row_segments.push_back({"ppg", 0, q_stream.dim(0)});
        r.attention = std::move(map);
    }
    return r;
}

ForwardResult forward(const PulseParams& params, const Tensor& window, bool capture) {
    auto rec = record_forward<float>(params.config, params.tensors, window, capture);
    ForwardResult r{rec.tape.value(rec.output)[0], std::nullopt};
    if (capture) {
        AttentionMap map;
        map.heads = std::move(rec.attention);
        std::tie(map.row_segments, map.col_segments) = attention_segments(params.config);
        r.attention = std::move(map);
    }
    return r;
}

}  // namespace pulse
