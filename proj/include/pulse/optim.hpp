#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pulse/tensor.hpp"

namespace pulse {

struct AdamHyper {
    double lr = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment estimates mirror the parameter list slot for slot.
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    AdamState() = default;
    AdamState(AdamHyper h, std::span<const Tensor> params);
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

/// Mean absolute error; throws DimensionError on length mismatch or empty input.
double l1_loss(std::span<const float> pred, std::span<const float> target);

}  // namespace pulse
