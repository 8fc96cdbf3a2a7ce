#pragma once

// Reverse-mode differentiation over the tensorcore kernels.
//
// A Tape records every op applied to its variables. backward() walks the
// recording in reverse and hands each parameter leaf its accumulated
// gradient. Tapes are single-threaded; use one per worker.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pulse/tensorcore.hpp"

namespace pulse::ad {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

template <typename T>
class Tape {
public:
    using TensorT = BasicTensor<T>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) noexcept = default;
    Tape& operator=(Tape&&) noexcept = default;

    /// Leaf that never receives a gradient.
    Var constant(TensorT value);
    /// Learnable leaf. `slot` is the parameter's position in the caller's list.
    Var parameter(TensorT value, std::size_t slot);

    const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var conv1d(Var input, Var weights, Var bias, const ConvSpec& spec);
    Var matmul(Var a, Var b);
    Var dense(Var input, Var weights, Var bias);
    Var softmax_rows(Var a);
    Var layer_norm(Var input, Var gain, Var shift, double eps = 1e-5);
    Var relu(Var input);
    Var avg_pool_time(Var input, std::size_t factor);
    Var transpose(Var a);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(std::span<const Var> parts);
    Var slice_cols(Var a, std::size_t begin, std::size_t count);
    Var scale(Var a, double factor);
    Var add(Var a, Var b);
    /// [M,N] -> [N]
    Var mean_rows(Var a);
    /// Sum of all elements, shape [1].
    Var sum(Var a);
    /// Single element by flat index, shape [1].
    Var pick(Var a, std::size_t index);
    /// mean |pred - target|, shape [1]. The subgradient at zero error is 0.
    Var l1_loss(Var pred, Var target);

    /// Reverse pass from `output` seeded with `seed` (same shape as the
    /// output). Gradients are added into `param_grads[slot]`, which must
    /// already hold a tensor of the parameter's shape for every slot reached.
    void backward(Var output, const TensorT& seed, std::span<TensorT> param_grads) const;

    /// Convenience form: one fresh gradient per slot in [0, n_slots). Slots
    /// that do not influence the output get zeros (or stay empty if the slot
    /// was never registered).
    std::vector<TensorT> gradients(Var output, const TensorT& seed, std::size_t n_slots) const;

private:
    using Grads = std::vector<TensorT>;
    using BackwardFn = std::function<void(const Tape&, const TensorT& grad_out, Grads& grads)>;

    struct Node {
        TensorT value;
        BackwardFn backward;
        bool requires_grad = false;
        std::ptrdiff_t slot = -1;
    };

    Var push(TensorT value, bool requires_grad, BackwardFn fn);
    bool needs(Var v) const { return nodes_[v.id].requires_grad; }
    static void accumulate(Grads& grads, Var target, TensorT&& g);

    std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pulse::ad
