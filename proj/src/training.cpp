#include "pulse/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pulse/parallel.hpp"
#include "pulse/rng.hpp"

namespace pulse {

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (max_epochs == 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (patience == 0 || patience > max_epochs) {
        throw std::invalid_argument("TrainConfig: patience must be in [1, max_epochs]");
    }
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"seed", c.seed},
            {"check_mode_64", c.check_mode_64},
            {"warm_start_output_bias", c.warm_start_output_bias}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("batch_size", c.batch_size);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("lr", c.adam.lr);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("eps", c.adam.eps);
    get("seed", c.seed);
    get("check_mode_64", c.check_mode_64);
    get("warm_start_output_bias", c.warm_start_output_bias);
    c.validate();
    return c;
}

double TrainHistory::best_val_mae() const {
    if (best_epoch == 0) return std::numeric_limits<double>::infinity();
    return epochs.at(best_epoch - 1).val_mae;
}

namespace {

// Windows per gradient chunk. Chunks are summed in index order, so results do
// not depend on the worker count.
constexpr std::size_t kChunk = 8;

template <typename T>
std::vector<BasicTensor<T>> zeros_like(std::span<const Tensor> params) {
    std::vector<BasicTensor<T>> out;
    out.reserve(params.size());
    for (const Tensor& p : params) out.emplace_back(p.shape());
    return out;
}

template <typename T>
double accumulate_window(const PulseConfig& config, std::span<const BasicTensor<T>> params, const Tensor& window,
                         float target, double seed_scale, std::vector<BasicTensor<T>>& grads) {
    RecordedForward<T> rec = [&] {
        if constexpr (std::is_same_v<T, float>) {
            return record_forward<T>(config, params, window, false);
        } else {
            return record_forward<T>(config, params, window.template cast<T>(), false);
        }
    }();
    const double pred = rec.tape.value(rec.output)[0];
    const double diff = pred - static_cast<double>(target);
    const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    if (sign != 0.0) {
        rec.tape.backward(rec.output, BasicTensor<T>({1}, static_cast<T>(sign * seed_scale)), grads);
    }
    return std::abs(diff);
}

template <typename T>
BatchGradient batch_gradient_impl(const PulseParams& params, const WindowSet& data,
                                  std::span<const std::size_t> batch) {
    std::vector<BasicTensor<T>> values;
    std::span<const BasicTensor<T>> view;
    if constexpr (std::is_same_v<T, float>) {
        view = params.tensors;
    } else {
        for (const Tensor& p : params.tensors) values.push_back(p.template cast<T>());
        view = values;
    }

    const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<std::vector<BasicTensor<T>>> chunk_grads(n_chunks);
    std::vector<double> chunk_loss(n_chunks, 0.0);
    const double seed_scale = 1.0 / static_cast<double>(batch.size());

    parallel_for(n_chunks, [&](std::size_t c) {
        chunk_grads[c] = zeros_like<T>(params.tensors);
        const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
        for (std::size_t k = c * kChunk; k < end; ++k) {
            const std::size_t i = batch[k];
            chunk_loss[c] += accumulate_window<T>(params.config, view, data.windows[i], data.targets[i], seed_scale,
                                                  chunk_grads[c]);
        }
    });

    BatchGradient out;
    out.grads = zeros_like<float>(params.tensors);
    std::vector<std::vector<double>> sum(params.tensors.size());
    for (std::size_t s = 0; s < sum.size(); ++s) sum[s].assign(params.tensors[s].size(), 0.0);
    for (std::size_t c = 0; c < n_chunks; ++c) {
        out.loss += chunk_loss[c];
        for (std::size_t s = 0; s < sum.size(); ++s) {
            const auto& g = chunk_grads[c][s];
            for (std::size_t i = 0; i < g.size(); ++i) sum[s][i] += static_cast<double>(g[i]);
        }
    }
    for (std::size_t s = 0; s < sum.size(); ++s) {
        for (std::size_t i = 0; i < sum[s].size(); ++i) out.grads[s][i] = static_cast<float>(sum[s][i]);
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

}  // namespace

BatchGradient batch_gradient(const PulseParams& params, const WindowSet& data, std::span<const std::size_t> batch,
                             bool check_mode_64) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    return check_mode_64 ? batch_gradient_impl<double>(params, data, batch)
                         : batch_gradient_impl<float>(params, data, batch);
}

Evaluation evaluate(const PulseParams& params, const WindowSet& windows) {
    if (windows.empty()) throw std::invalid_argument("evaluate: empty window set");
    Evaluation e;
    e.predictions.resize(windows.size());
    parallel_for(windows.size(), [&](std::size_t i) { e.predictions[i] = forward(params, windows.windows[i]).hr_bpm; });
    double s = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        s += std::abs(static_cast<double>(e.predictions[i]) - static_cast<double>(windows.targets[i]));
    }
    e.mae = s / static_cast<double>(windows.size());
    return e;
}

TrainResult train(const PulseParams& init, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (val_set.empty()) throw std::invalid_argument("train: empty validation set");

    PulseParams params = init;
    if (cfg.warm_start_output_bias) {
        const double mean = std::accumulate(train_set.targets.begin(), train_set.targets.end(), 0.0) /
                            static_cast<double>(train_set.size());
        params.tensors[params.slot("head.out.bias")][0] = static_cast<float>(mean);
    }

    AdamState adam(cfg.adam, params.tensors);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());

    TrainResult result{params, {}};
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));

        double loss_sum = 0.0;
        for (std::size_t start = 0, batch_index = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            const std::span<const std::size_t> batch(order.data() + start, len);
            BatchGradient bg;
            try {
                bg = batch_gradient(params, train_set, batch, cfg.check_mode_64);
            } catch (const NumericError& e) {
                throw NumericError(e.layer(), std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                                  ", batch " + std::to_string(batch_index) + ")");
            }
            if (!std::isfinite(bg.loss)) {
                throw NumericError("loss", "non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(batch_index));
            }
            adam_step(params.tensors, bg.grads, adam);
            ++result.history.optimizer_steps;
            loss_sum += bg.loss * static_cast<double>(len);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_mae = evaluate(params, val_set).mae;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.epochs.push_back(rec);

        if (rec.val_mae < result.history.best_val_mae()) {
            result.history.best_epoch = epoch;
            result.best = params;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (on_epoch && !on_epoch(rec)) break;
        if (since_best >= cfg.patience) break;
    }
    return result;
}

std::string history_csv(const TrainHistory& history) {
    std::string out = "epoch,train_loss,val_mae\n";
    char line[128];
    for (const EpochRecord& r : history.epochs) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", r.epoch, r.train_loss, r.val_mae);
        out += line;
    }
    return out;
}

}  // namespace pulse
