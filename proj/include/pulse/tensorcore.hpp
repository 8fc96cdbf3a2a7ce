#pragma once

// Differentiable dense kernels. Every forward op has a matching *_backward
// that maps the output gradient back onto the op's inputs. Sums accumulate in
// double and are rounded once to the storage type.

#include <cstddef>
#include <span>

#include "pulse/tensor.hpp"

namespace pulse {

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_size = 1;
    std::size_t dilation = 1;
    std::size_t padding = 0;  // zeros added at each temporal end

    std::size_t receptive_field() const { return (kernel_size - 1) * dilation + 1; }
    std::size_t output_length(std::size_t input_length) const {
        return input_length + 2 * padding - (kernel_size - 1) * dilation;
    }
    /// Padding that keeps T_out == T. Requires (K-1)*d to be even.
    static std::size_t same_padding(std::size_t kernel_size, std::size_t dilation);
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> input, weights, bias;
};

template <typename T>
struct MatmulGrads {
    BasicTensor<T> a, b;
};

template <typename T>
struct AffineGrads {
    BasicTensor<T> input, weights, bias;
};

template <typename T>
struct NormGrads {
    BasicTensor<T> input, gain, shift;
};

/// Dilated 1-D convolution, stride 1, zero padding.
///   y[m,t] = bias[m] + sum_i sum_l x[l, t + (K-1)d - p - d*i] * W[m,l,i]
/// Tap i = 0 reads the most recent sample; taps reach back in time by d*i.
template <typename T>
BasicTensor<T> conv1d_dilated(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& bias, const ConvSpec& spec);
template <typename T>
ConvGrads<T> conv1d_dilated_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                     const ConvSpec& spec, const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& a);
/// Takes the softmax *output*, not its input.
template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_output);

/// Affine map over the last axis; leading axes are treated as a batch.
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias);
template <typename T>
AffineGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gain, const BasicTensor<T>& shift,
                          double eps = 1e-5);
template <typename T>
NormGrads<T> layer_norm_backward(const BasicTensor<T>& input, const BasicTensor<T>& gain,
                                 const BasicTensor<T>& grad_output, double eps = 1e-5);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

/// [C,T] -> [C,T/factor], mean over non-overlapping groups. T must divide evenly.
template <typename T>
BasicTensor<T> avg_pool_time(const BasicTensor<T>& input, std::size_t factor);
template <typename T>
BasicTensor<T> avg_pool_time_backward(const BasicTensor<T>& grad_output, std::size_t factor);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

/// Stacks [M_i,N] matrices into [sum M_i, N].
template <typename T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>* const> parts);
/// Places [M,N_i] matrices side by side into [M, sum N_i].
template <typename T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>* const> parts);
template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t count);
template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t begin, std::size_t count);

}  // namespace pulse
