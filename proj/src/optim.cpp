#include "pulse/optim.hpp"

#include <cmath>
#include <string>

namespace pulse {

AdamState::AdamState(AdamHyper h, std::span<const Tensor> params) : hyper(h) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.emplace_back(p.shape());
        v.emplace_back(p.shape());
    }
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                             std::to_string(grads.size()) + " grads, " + std::to_string(state.m.size()) +
                             " moment slots");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].shape() != grads[k].shape() || params[k].shape() != state.m[k].shape()) {
            throw DimensionError("adam_step: slot " + std::to_string(k) + " parameter " +
                                 shape_string(params[k].shape()) + " vs gradient " + shape_string(grads[k].shape()));
        }
    }

    const AdamHyper& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].data();
        auto g = grads[k].data();
        auto m = state.m[k].data();
        auto v = state.v[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps);
            p[i] = static_cast<float>(static_cast<double>(p[i]) - update);
        }
    }
}

double l1_loss(std::span<const float> pred, std::span<const float> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw DimensionError("l1_loss: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(target.size()) + " targets");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(static_cast<double>(pred[i]) - target[i]);
    return s / static_cast<double>(pred.size());
}

}  // namespace pulse
