#pragma once

// The heart-rate network: per-modality dilated TCN extractors, attention
// fusion of the PPG and accelerometer embedding sequences, layer norm, and a
// two-layer regression head.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pulse/autodiff.hpp"
#include "pulse/tensor.hpp"

namespace pulse {

/// Which embedding streams feed the queries and the keys/values.
enum class AttentionMode {
    MhcaPpgQuery,     // PPG -> Q, accelerometer -> K,V (default)
    MhcaPpgKeyValue,  // accelerometer -> Q, PPG -> K,V
    MhsaPpgOnly,      // PPG self-attention, accelerometer unused
    MhsaConcat,       // self-attention over PPG and accelerometer sequences concatenated
};

std::string_view to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(std::string_view name);

struct PulseConfig {
    std::vector<std::size_t> block_channels{32, 48, 64};
    std::size_t convs_per_block = 3;
    std::size_t dilation = 2;
    std::size_t kernel_size = 3;
    std::size_t pool_factor = 2;
    std::size_t heads = 4;
    std::size_t d_model = 64;
    std::size_t head_hidden = 128;
    AttentionMode attention_mode = AttentionMode::MhcaPpgQuery;
    std::size_t ppg_channels = 1;
    std::size_t acc_channels = 3;
    std::size_t window_length = 256;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    std::size_t input_channels() const { return ppg_channels + acc_channels; }
    std::size_t feature_dim() const { return block_channels.back(); }
    /// Embedding-sequence length per modality stream after all pooling.
    std::size_t sequence_length() const;
    std::size_t head_dim() const { return d_model / heads; }

    bool operator==(const PulseConfig&) const = default;
};

nlohmann::json config_to_json(const PulseConfig& config);
/// Missing keys keep their defaults; unknown keys are ignored so a combined
/// model+training config file can be passed as is.
PulseConfig config_from_json(const nlohmann::json& j);

enum class ParamKind { Weight, Bias, Gain, Shift };

struct ParamSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in = 1;
    ParamKind kind = ParamKind::Weight;
    bool relu_follows = false;  // weight feeds a ReLU
};

/// Ordered list of every learnable tensor. The order is the serialization
/// order and the slot numbering used by gradients and the optimizer.
std::vector<ParamSpec> param_layout(const PulseConfig& config);

/// Closed-form learnable count; independent of param_layout.
std::size_t param_count(const PulseConfig& config);

struct PulseParams {
    PulseConfig config;
    std::vector<Tensor> tensors;

    std::size_t element_count() const;
    /// Slot of a named tensor; throws std::out_of_range if absent.
    std::size_t slot(std::string_view name) const;
};

/// Half-width of the uniform weight init: sqrt(6 / fan_in) in front of a ReLU,
/// sqrt(3 / fan_in) otherwise (unit gain on the activation variance).
double init_bound(const ParamSpec& spec);

/// Weights ~ U(-a, a) with a = init_bound(spec); biases and norm shift zero,
/// norm gain one. Deterministic in `seed`.
PulseParams init_params(const PulseConfig& config, std::uint64_t seed);

/// Contiguous span of rows or columns belonging to one input stream.
struct Segment {
    std::string name;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct AttentionMap {
    std::vector<Tensor> heads;  // one [T_q, T_kv] post-softmax matrix per head
    std::vector<Segment> row_segments;
    std::vector<Segment> col_segments;
};

enum class Stream { Ppg, Acc };

struct MhcaResult {
    Tensor output;
    std::optional<AttentionMap> attention;
};

struct ForwardResult {
    float hr_bpm = 0.0f;
    std::optional<AttentionMap> attention;
};

/// Forward pass recorded on a tape, for gradient computation.
template <typename T>
struct RecordedForward {
    ad::Tape<T> tape;
    ad::Var output;                    // shape [1], HR in BPM
    std::vector<BasicTensor<T>> attention;  // per-head weights when captured
};

/// Records the whole network on a fresh tape. `params` follows param_layout
/// slot order; T = double gives the 64-bit checking mode.
template <typename T>
RecordedForward<T> record_forward(const PulseConfig& config, std::span<const BasicTensor<T>> params,
                                  const BasicTensor<T>& window, bool capture);

/// [C,T] stream -> [T', feature_dim] embedding sequence.
Tensor extract_features(const PulseParams& params, const Tensor& stream, Stream which);

/// Attention fusion from query and key/value embedding sequences, followed
/// by the output projection.
MhcaResult mhca(const PulseParams& params, const Tensor& q_stream, const Tensor& kv_stream, bool capture);

/// Throws DimensionError on a channel mismatch and NumericError (naming the
/// layer) when a non-finite value appears.
ForwardResult forward(const PulseParams& params, const Tensor& window, bool capture = false);

/// Row/column segmentation of the attention map for a config's mode.
std::pair<std::vector<Segment>, std::vector<Segment>> attention_segments(const PulseConfig& config);

}  // namespace pulse
