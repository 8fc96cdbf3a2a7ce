#include "pulse/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace pulse::ad {

template <typename T>
Var Tape<T>::push(TensorT value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), requires_grad ? std::move(fn) : BackwardFn{}, requires_grad, -1});
    return Var{nodes_.size() - 1};
}

template <typename T>
void Tape<T>::accumulate(Grads& grads, Var target, TensorT&& g) {
    TensorT& slot = grads[target.id];
    if (slot.empty()) {
        slot = std::move(g);
        return;
    }
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

template <typename T>
Var Tape<T>::constant(TensorT value) {
    return push(std::move(value), false, {});
}

template <typename T>
Var Tape<T>::parameter(TensorT value, std::size_t slot) {
    nodes_.push_back(Node{std::move(value), {}, true, static_cast<std::ptrdiff_t>(slot)});
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::conv1d(Var input, Var weights, Var bias, const ConvSpec& spec) {
    TensorT out = pulse::conv1d_dilated(value(input), value(weights), value(bias), spec);
    const bool rg = needs(input) || needs(weights) || needs(bias);
    return push(std::move(out), rg, [input, weights, bias, spec](const Tape& t, const TensorT& gy, Grads& grads) {
        auto g = pulse::conv1d_dilated_backward(t.value(input), t.value(weights), spec, gy);
        if (t.needs(input)) accumulate(grads, input, std::move(g.input));
        if (t.needs(weights)) accumulate(grads, weights, std::move(g.weights));
        if (t.needs(bias)) accumulate(grads, bias, std::move(g.bias));
    });
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
    TensorT out = pulse::matmul(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](const Tape& t, const TensorT& gy, Grads& grads) {
        auto g = pulse::matmul_backward(t.value(a), t.value(b), gy);
        if (t.needs(a)) accumulate(grads, a, std::move(g.a));
        if (t.needs(b)) accumulate(grads, b, std::move(g.b));
    });
}

template <typename T>
Var Tape<T>::dense(Var input, Var weights, Var bias) {
    TensorT out = pulse::dense(value(input), value(weights), value(bias));
    const bool rg = needs(input) || needs(weights) || needs(bias);
    return push(std::move(out), rg, [input, weights, bias](const Tape& t, const TensorT& gy, Grads& grads) {
        auto g = pulse::dense_backward(t.value(input), t.value(weights), gy);
        if (t.needs(input)) accumulate(grads, input, std::move(g.input));
        if (t.needs(weights)) accumulate(grads, weights, std::move(g.weights));
        if (t.needs(bias)) accumulate(grads, bias, std::move(g.bias));
    });
}

template <typename T>
Var Tape<T>::softmax_rows(Var a) {
    TensorT out = pulse::softmax_rows(value(a));
    const std::size_t self = nodes_.size();
    return push(std::move(out), needs(a), [a, self](const Tape& t, const TensorT& gy, Grads& grads) {
        accumulate(grads, a, pulse::softmax_rows_backward(t.nodes_[self].value, gy));
    });
}

template <typename T>
Var Tape<T>::layer_norm(Var input, Var gain, Var shift, double eps) {
    TensorT out = pulse::layer_norm(value(input), value(gain), value(shift), eps);
    const bool rg = needs(input) || needs(gain) || needs(shift);
    return push(std::move(out), rg, [input, gain, shift, eps](const Tape& t, const TensorT& gy, Grads& grads) {
        auto g = pulse::layer_norm_backward(t.value(input), t.value(gain), gy, eps);
        if (t.needs(input)) accumulate(grads, input, std::move(g.input));
        if (t.needs(gain)) accumulate(grads, gain, std::move(g.gain));
        if (t.needs(shift)) accumulate(grads, shift, std::move(g.shift));
    });
}

template <typename T>
Var Tape<T>::relu(Var input) {
    TensorT out = pulse::relu(value(input));
    return push(std::move(out), needs(input), [input](const Tape& t, const TensorT& gy, Grads& grads) {
        accumulate(grads, input, pulse::relu_backward(t.value(input), gy));
    });
}

template <typename T>
Var Tape<T>::avg_pool_time(Var input, std::size_t factor) {
    TensorT out = pulse::avg_pool_time(value(input), factor);
    return push(std::move(out), needs(input), [input, factor](const Tape&, const TensorT& gy, Grads& grads) {
        accumulate(grads, input, pulse::avg_pool_time_backward(gy, factor));
    });
}

template <typename T>
Var Tape<T>::transpose(Var a) {
    TensorT out = pulse::transpose(value(a));
    return push(std::move(out), needs(a), [a](const Tape&, const TensorT& gy, Grads& grads) {
        accumulate(grads, a, pulse::transpose(gy));
    });
}

template <typename T>
Var Tape<T>::concat_rows(std::span<const Var> parts) {
    std::vector<const TensorT*> values;
    bool rg = false;
    for (Var p : parts) {
        values.push_back(&value(p));
        rg = rg || needs(p);
    }
    TensorT out = pulse::concat_rows<T>(values);
    std::vector<Var> ids(parts.begin(), parts.end());
    return push(std::move(out), rg, [ids](const Tape& t, const TensorT& gy, Grads& grads) {
        std::size_t row = 0;
        for (Var p : ids) {
            const std::size_t rows = t.value(p).dim(0);
            if (t.needs(p)) accumulate(grads, p, pulse::slice_rows(gy, row, rows));
            row += rows;
        }
    });
}

template <typename T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
    std::vector<const TensorT*> values;
    bool rg = false;
    for (Var p : parts) {
        values.push_back(&value(p));
        rg = rg || needs(p);
    }
    TensorT out = pulse::concat_cols<T>(values);
    std::vector<Var> ids(parts.begin(), parts.end());
    return push(std::move(out), rg, [ids](const Tape& t, const TensorT& gy, Grads& grads) {
        std::size_t col = 0;
        for (Var p : ids) {
            const std::size_t cols = t.value(p).dim(1);
            if (t.needs(p)) accumulate(grads, p, pulse::slice_cols(gy, col, cols));
            col += cols;
        }
    });
}

template <typename T>
Var Tape<T>::slice_cols(Var a, std::size_t begin, std::size_t count) {
    TensorT out = pulse::slice_cols(value(a), begin, count);
    return push(std::move(out), needs(a), [a, begin, count](const Tape& t, const TensorT& gy, Grads& grads) {
        const TensorT& src = t.value(a);
        TensorT g(src.shape());
        for (std::size_t i = 0; i < src.dim(0); ++i) {
            for (std::size_t j = 0; j < count; ++j) g.at(i, begin + j) = gy.at(i, j);
        }
        accumulate(grads, a, std::move(g));
    });
}

template <typename T>
Var Tape<T>::scale(Var a, double factor) {
    TensorT out = value(a);
    for (auto& v : out.data()) v = static_cast<T>(static_cast<double>(v) * factor);
    return push(std::move(out), needs(a), [a, factor](const Tape&, const TensorT& gy, Grads& grads) {
        TensorT g = gy;
        for (auto& v : g.data()) v = static_cast<T>(static_cast<double>(v) * factor);
        accumulate(grads, a, std::move(g));
    });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
    if (value(a).shape() != value(b).shape()) {
        throw DimensionError("add: shape " + shape_string(value(a).shape()) + " vs " +
                             shape_string(value(b).shape()));
    }
    TensorT out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += value(b)[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](const Tape& t, const TensorT& gy, Grads& grads) {
        if (t.needs(a)) accumulate(grads, a, TensorT(gy));
        if (t.needs(b)) accumulate(grads, b, TensorT(gy));
    });
}

template <typename T>
Var Tape<T>::mean_rows(Var a) {
    const TensorT& x = value(a);
    require_rank(x, 2, "mean_rows input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> acc(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) acc[j] += x.at(i, j);
    }
    TensorT out({cols});
    for (std::size_t j = 0; j < cols; ++j) out[j] = static_cast<T>(acc[j] / static_cast<double>(rows));
    return push(std::move(out), needs(a), [a, rows, cols](const Tape&, const TensorT& gy, Grads& grads) {
        TensorT g({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                g.at(i, j) = static_cast<T>(static_cast<double>(gy[j]) / static_cast<double>(rows));
            }
        }
        accumulate(grads, a, std::move(g));
    });
}

template <typename T>
Var Tape<T>::sum(Var a) {
    double s = 0.0;
    for (T v : value(a).data()) s += v;
    TensorT out({1}, static_cast<T>(s));
    return push(std::move(out), needs(a), [a](const Tape& t, const TensorT& gy, Grads& grads) {
        accumulate(grads, a, TensorT(t.value(a).shape(), gy[0]));
    });
}

template <typename T>
Var Tape<T>::pick(Var a, std::size_t index) {
    if (index >= value(a).size()) {
        throw DimensionError("pick: index " + std::to_string(index) + " outside " + shape_string(value(a).shape()));
    }
    TensorT out({1}, value(a)[index]);
    return push(std::move(out), needs(a), [a, index](const Tape& t, const TensorT& gy, Grads& grads) {
        TensorT g(t.value(a).shape());
        g[index] = gy[0];
        accumulate(grads, a, std::move(g));
    });
}

template <typename T>
Var Tape<T>::l1_loss(Var pred, Var target) {
    const TensorT& p = value(pred);
    const TensorT& y = value(target);
    if (p.size() != y.size() || p.empty()) {
        throw DimensionError("l1_loss: prediction " + shape_string(p.shape()) + " vs target " +
                             shape_string(y.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(static_cast<double>(p[i]) - static_cast<double>(y[i]));
    TensorT out({1}, static_cast<T>(s / static_cast<double>(p.size())));
    return push(std::move(out), needs(pred) || needs(target),
                [pred, target](const Tape& t, const TensorT& gy, Grads& grads) {
                    const TensorT& pv = t.value(pred);
                    const TensorT& yv = t.value(target);
                    const double scale = static_cast<double>(gy[0]) / static_cast<double>(pv.size());
                    TensorT g(pv.shape());
                    for (std::size_t i = 0; i < pv.size(); ++i) {
                        const double d = static_cast<double>(pv[i]) - static_cast<double>(yv[i]);
                        g[i] = static_cast<T>(d > 0 ? scale : (d < 0 ? -scale : 0.0));
                    }
                    if (t.needs(target)) {
                        TensorT gt = g;
                        for (auto& v : gt.data()) v = -v;
                        accumulate(grads, target, std::move(gt));
                    }
                    if (t.needs(pred)) accumulate(grads, pred, std::move(g));
                });
}

template <typename T>
void Tape<T>::backward(Var output, const TensorT& seed, std::span<TensorT> param_grads) const {
    if (output.id >= nodes_.size()) throw DimensionError("backward: unknown output variable");
    if (seed.shape() != value(output).shape()) {
        throw DimensionError("backward: seed shape " + shape_string(seed.shape()) + " does not match output " +
                             shape_string(value(output).shape()));
    }
    Grads grads(output.id + 1);
    grads[output.id] = seed;
    for (std::size_t k = output.id + 1; k-- > 0;) {
        const Node& node = nodes_[k];
        if (grads[k].empty() || !node.requires_grad) continue;
        if (node.slot >= 0) {
            if (static_cast<std::size_t>(node.slot) >= param_grads.size()) {
                throw DimensionError("backward: no gradient buffer for parameter slot " + std::to_string(node.slot));
            }
            TensorT& dst = param_grads[static_cast<std::size_t>(node.slot)];
            if (dst.size() != grads[k].size()) {
                throw DimensionError("backward: gradient buffer for slot " + std::to_string(node.slot) +
                                     " has shape " + shape_string(dst.shape()) + ", parameter is " +
                                     shape_string(node.value.shape()));
            }
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grads[k][i];
        } else if (node.backward) {
            node.backward(*this, grads[k], grads);
        }
        grads[k] = TensorT{};
    }
}

template <typename T>
std::vector<BasicTensor<T>> Tape<T>::gradients(Var output, const TensorT& seed, std::size_t n_slots) const {
    std::vector<TensorT> out(n_slots);
    for (const Node& n : nodes_) {
        if (n.slot >= 0 && static_cast<std::size_t>(n.slot) < n_slots) {
            out[static_cast<std::size_t>(n.slot)] = TensorT(n.value.shape());
        }
    }
    backward(output, seed, out);
    return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace pulse::ad
