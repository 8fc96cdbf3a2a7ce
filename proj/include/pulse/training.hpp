#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pulse/model.hpp"
#include "pulse/optim.hpp"
#include "pulse/preprocess.hpp"

namespace pulse {

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t max_epochs = 500;
    std::size_t patience = 150;  // epochs without validation improvement
    AdamHyper adam;
    std::uint64_t seed = 0;
    /// Compute gradients through the float64 graph (slow; for checking).
    bool check_mode_64 = false;
    /// Set the output bias to the mean training target before the first step.
    bool warm_start_output_bias = true;

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Reads the TrainConfig fields (and "lr", "beta1", "beta2", "eps") from a
/// flat JSON object; absent fields keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_mae = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 1-based; 0 before any epoch
    std::size_t optimizer_steps = 0;

    double best_val_mae() const;
};

struct TrainResult {
    PulseParams best;
    TrainHistory history;
};

/// Called after every epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Mini-batch Adam on the L1 loss with epoch-level early stopping. Returns the
/// snapshot with the lowest validation MAE.
TrainResult train(const PulseParams& init, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Mean L1 loss of `batch` and its gradient with respect to every parameter.
struct BatchGradient {
    double loss = 0.0;
    std::vector<Tensor> grads;
};
BatchGradient batch_gradient(const PulseParams& params, const WindowSet& data, std::span<const std::size_t> batch,
                             bool check_mode_64 = false);

struct Evaluation {
    std::vector<float> predictions;  // window order
    double mae = 0.0;
};

Evaluation evaluate(const PulseParams& params, const WindowSet& windows);

/// "epoch,train_loss,val_mae" rows.
std::string history_csv(const TrainHistory& history);

}  // namespace pulse
