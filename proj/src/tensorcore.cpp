#include "pulse/tensorcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace pulse {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t ConvSpec::same_padding(std::size_t kernel_size, std::size_t dilation) {
    const std::size_t span = (kernel_size - 1) * dilation;
    if (span % 2 != 0) {
        throw DimensionError("same padding needs an even (kernel_size-1)*dilation, got " + std::to_string(span));
    }
    return span / 2;
}

namespace {

void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(want) + ", got " + std::to_string(got));
    }
}

template <typename T>
void round_into(std::span<const double> acc, T* out) {
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
}

// Rows widened to double with `pad_lo` / `pad_hi` zeros around each.
template <typename T>
std::unique_ptr<double[]> widen_rows(const T* src, std::size_t rows, std::size_t len, std::size_t pad_lo,
                                     std::size_t pad_hi) {
    const std::size_t stride = pad_lo + len + pad_hi;
    auto out = std::make_unique_for_overwrite<double[]>(rows * stride);
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = out.get() + r * stride;
        std::fill_n(row, pad_lo, 0.0);
        for (std::size_t t = 0; t < len; ++t) row[pad_lo + t] = static_cast<double>(src[r * len + t]);
        std::fill_n(row + pad_lo + len, pad_hi, 0.0);
    }
    return out;
}

using v8d = double __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
    v8d v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof v); }

// Tile of B outputs: acc[j*n + t] += sum_r sum_i w[j*wo + r*wi + i] * rows[r*stride + t + off(i)],
// off(i) = (reversed ? K-1-i : i) * d. Each 8-step slice of the B rows stays in registers
// across all input rows and taps; every element sums in the same (r, i) order.
template <std::size_t B>
void conv_tile(double* acc, const double* rows, std::size_t n_rows, std::size_t stride, const double* w,
               std::size_t wo, std::size_t wi, std::size_t k, std::size_t d, std::size_t n, bool reversed) {
    auto off = [&](std::size_t i) { return (reversed ? k - 1 - i : i) * d; };
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8) {
        v8d a[B];
        for (std::size_t j = 0; j < B; ++j) a[j] = load8(acc + j * n + t);
        for (std::size_t r = 0; r < n_rows; ++r) {
            const double* row = rows + r * stride + t;
            const double* wr = w + r * wi;
            for (std::size_t i = 0; i < k; ++i) {
                const v8d x = load8(row + off(i));
                for (std::size_t j = 0; j < B; ++j) a[j] += wr[j * wo + i] * x;
            }
        }
        for (std::size_t j = 0; j < B; ++j) store8(acc + j * n + t, a[j]);
    }
    for (; t < n; ++t) {
        double a[B];
        for (std::size_t j = 0; j < B; ++j) a[j] = acc[j * n + t];
        for (std::size_t r = 0; r < n_rows; ++r) {
            const double* row = rows + r * stride + t;
            const double* wr = w + r * wi;
            for (std::size_t i = 0; i < k; ++i) {
                const double x = row[off(i)];
                for (std::size_t j = 0; j < B; ++j) a[j] += wr[j * wo + i] * x;
            }
        }
        for (std::size_t j = 0; j < B; ++j) acc[j * n + t] = a[j];
    }
}

// out[j*K + i] = sum_t dy[t] * rows[j*stride + t + (K-1-i)*d] for j < B, eight lanes per sum.
template <std::size_t B, std::size_t K>
void tap_dots(const double* dy, const double* rows, std::size_t stride, std::size_t d, std::size_t n, double* out) {
    v8d s[B][K] = {};
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8) {
        const v8d g = load8(dy + t);
        for (std::size_t j = 0; j < B; ++j) {
            for (std::size_t i = 0; i < K; ++i) s[j][i] += g * load8(rows + j * stride + t + (K - 1 - i) * d);
        }
    }
    for (std::size_t j = 0; j < B; ++j) {
        for (std::size_t i = 0; i < K; ++i) {
            const v8d& v = s[j][i];
            double sum = ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
            for (std::size_t u = t; u < n; ++u) sum += dy[u] * rows[j * stride + u + (K - 1 - i) * d];
            out[j * K + i] = sum;
        }
    }
}

// conv_tile over `count` outputs in groups of four.
void conv_accumulate(double* acc, std::size_t count, const double* rows, std::size_t n_rows, std::size_t stride,
                     const double* w, std::size_t wo, std::size_t wi, std::size_t k, std::size_t d, std::size_t n,
                     bool reversed) {
    std::size_t j = 0;
    for (; j + 4 <= count; j += 4) conv_tile<4>(acc + j * n, rows, n_rows, stride, w + j * wo, wo, wi, k, d, n, reversed);
    for (; j < count; ++j) conv_tile<1>(acc + j * n, rows, n_rows, stride, w + j * wo, wo, wi, k, d, n, reversed);
}

// Eight independent partial sums so the loop vectorizes; the combine order is fixed.
template <typename A, typename B>
double dot(const A* a, const B* b, std::size_t n) {
    double s[8] = {};
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8) {
        for (std::size_t j = 0; j < 8; ++j) s[j] += static_cast<double>(a[t + j]) * static_cast<double>(b[t + j]);
    }
    double tail = 0.0;
    for (; t < n; ++t) tail += static_cast<double>(a[t]) * static_cast<double>(b[t]);
    return (((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]))) + tail;
}

template <typename T>
void check_conv(const BasicTensor<T>& input, const BasicTensor<T>& weights, const ConvSpec& spec) {
    require_rank(input, 2, "conv1d input");
    require_rank(weights, 3, "conv1d weights");
    if (spec.kernel_size < 1) throw DimensionError("conv1d kernel_size must be >= 1");
    if (spec.dilation < 1) throw DimensionError("conv1d dilation must be >= 1");
    require_dim(input.dim(0), spec.in_channels, "conv1d input axis 0 (channels)");
    require_dim(weights.dim(0), spec.out_channels, "conv1d weights axis 0 (out_channels)");
    require_dim(weights.dim(1), spec.in_channels, "conv1d weights axis 1 (in_channels)");
    require_dim(weights.dim(2), spec.kernel_size, "conv1d weights axis 2 (kernel_size)");
    if (input.dim(1) + 2 * spec.padding < spec.receptive_field()) {
        throw DimensionError("conv1d input axis 1 (time): padded length " +
                             std::to_string(input.dim(1) + 2 * spec.padding) + " shorter than receptive field " +
                             std::to_string(spec.receptive_field()));
    }
}

}  // namespace

template <typename T>
BasicTensor<T> conv1d_dilated(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                              const ConvSpec& spec) {
    check_conv(input, weights, spec);
    require_rank(bias, 1, "conv1d bias");
    require_dim(bias.dim(0), spec.out_channels, "conv1d bias axis 0");

    const std::size_t in_len = input.dim(1), out_len = spec.output_length(in_len);
    const std::size_t k = spec.kernel_size, stride = in_len + 2 * spec.padding;
    const auto xp = widen_rows(input.data().data(), spec.in_channels, in_len, spec.padding, spec.padding);
    const auto w = widen_rows(weights.data().data(), 1, weights.size(), 0, 0);

    const std::size_t cin = spec.in_channels, cout = spec.out_channels;
    std::vector<double> acc(cout * out_len);
    for (std::size_t m = 0; m < cout; ++m) {
        std::fill_n(acc.begin() + static_cast<std::ptrdiff_t>(m * out_len), out_len, static_cast<double>(bias[m]));
    }
    // Tap i reads padded index t + (K-1-i)*d, i.e. x[t - d*i] in unpadded time.
    conv_accumulate(acc.data(), cout, xp.get(), cin, stride, w.get(), cin * k, k, k, spec.dilation, out_len, true);
    BasicTensor<T> out({cout, out_len});
    round_into<T>(acc, out.data().data());
    return out;
}

template <typename T>
ConvGrads<T> conv1d_dilated_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights, const ConvSpec& spec,
                                     const BasicTensor<T>& grad_output) {
    check_conv(input, weights, spec);
    const std::size_t in_len = input.dim(1), out_len = spec.output_length(in_len);
    require_rank(grad_output, 2, "conv1d grad_output");
    require_dim(grad_output.dim(0), spec.out_channels, "conv1d grad_output axis 0");
    require_dim(grad_output.dim(1), out_len, "conv1d grad_output axis 1");

    const std::size_t k = spec.kernel_size, d = spec.dilation, span = (k - 1) * d;
    const std::size_t x_stride = in_len + 2 * spec.padding;
    const std::size_t dy_stride = out_len + 2 * span;
    const auto xp = widen_rows(input.data().data(), spec.in_channels, in_len, spec.padding, spec.padding);
    const auto dyp = widen_rows(grad_output.data().data(), spec.out_channels, out_len, span, span);
    const auto w = widen_rows(weights.data().data(), 1, weights.size(), 0, 0);

    ConvGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), BasicTensor<T>({spec.out_channels})};

    for (std::size_t m = 0; m < spec.out_channels; ++m) {
        const double* dy = dyp.get() + m * dy_stride + span;
        double db = 0.0;
        for (std::size_t t = 0; t < out_len; ++t) db += dy[t];
        g.bias[m] = static_cast<T>(db);
        std::size_t l = 0;
        if (k == 3) {
            double taps[12];
            for (; l + 4 <= spec.in_channels; l += 4) {
                tap_dots<4, 3>(dy, xp.get() + l * x_stride, x_stride, d, out_len, taps);
                std::copy_n(taps, 12, &g.weights.at(m, l, 0));
            }
            for (; l < spec.in_channels; ++l) {
                tap_dots<1, 3>(dy, xp.get() + l * x_stride, x_stride, d, out_len, taps);
                std::copy_n(taps, 3, &g.weights.at(m, l, 0));
            }
        }
        for (; l < spec.in_channels; ++l) {
            const double* x = xp.get() + l * x_stride;
            for (std::size_t i = 0; i < k; ++i) {
                g.weights.at(m, l, i) = static_cast<T>(dot(dy, x + (k - 1 - i) * d, out_len));
            }
        }
    }

    // Padded-input gradient: dxp[s] = sum_i w[i] * dyp[s + i*d].
    const std::size_t cin = spec.in_channels, padded_len = out_len + span;
    std::vector<double> acc(cin * padded_len, 0.0);
    conv_accumulate(acc.data(), cin, dyp.get(), spec.out_channels, dy_stride, w.get(), k, cin * k, k, d, padded_len,
                    false);
    for (std::size_t l = 0; l < cin; ++l) {
        round_into<T>(std::span<const double>(acc).subspan(l * padded_len + spec.padding, in_len),
                      g.input.data().data() + l * in_len);
    }
    return g;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    require_dim(b.dim(0), a.dim(1), "matmul rhs axis 0 (inner dimension)");
    const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    BasicTensor<T> out({rows, cols});
    std::vector<double> acc(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a.at(i, k);
            const T* brow = b.data().data() + k * cols;
            for (std::size_t j = 0; j < cols; ++j) acc[j] += aik * static_cast<double>(brow[j]);
        }
        round_into<T>(acc, out.data().data() + i * cols);
    }
    return out;
}

template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& grad_output) {
    const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    require_rank(grad_output, 2, "matmul grad_output");
    require_dim(grad_output.dim(0), rows, "matmul grad_output axis 0");
    require_dim(grad_output.dim(1), cols, "matmul grad_output axis 1");

    MatmulGrads<T> g{BasicTensor<T>(a.shape()), BasicTensor<T>(b.shape())};
    for (std::size_t i = 0; i < rows; ++i) {
        const T* dy = grad_output.data().data() + i * cols;
        for (std::size_t k = 0; k < inner; ++k) {
            g.a.at(i, k) = static_cast<T>(dot(dy, b.data().data() + k * cols, cols));
        }
    }
    std::vector<double> acc(cols);
    for (std::size_t k = 0; k < inner; ++k) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const double aik = a.at(i, k);
            const T* dy = grad_output.data().data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) acc[j] += aik * static_cast<double>(dy[j]);
        }
        round_into<T>(acc, g.b.data().data() + k * cols);
    }
    return g;
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& a) {
    require_rank(a, 2, "softmax_rows input");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    BasicTensor<T> out(a.shape());
    std::vector<double> e(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const T* x = a.data().data() + i * cols;
        const double mx = *std::max_element(x, x + cols);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            e[j] = std::exp(static_cast<double>(x[j]) - mx);
            sum += e[j];
        }
        T* y = out.data().data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) y[j] = static_cast<T>(e[j] / sum);
    }
    return out;
}

template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_output) {
    if (output.shape() != grad_output.shape()) {
        throw DimensionError("softmax_rows grad_output shape " + shape_string(grad_output.shape()) +
                             " differs from output " + shape_string(output.shape()));
    }
    const std::size_t rows = output.dim(0), cols = output.dim(1);
    BasicTensor<T> g(output.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const T* y = output.data().data() + i * cols;
        const T* dy = grad_output.data().data() + i * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += static_cast<double>(y[j]) * static_cast<double>(dy[j]);
        T* dx = g.data().data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) {
            dx[j] = static_cast<T>(static_cast<double>(y[j]) * (static_cast<double>(dy[j]) - dot));
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
    require_rank(weights, 2, "dense weights");
    require_rank(bias, 1, "dense bias");
    if (input.rank() == 0) throw DimensionError("dense input must have at least one axis");
    const std::size_t f_in = weights.dim(0), f_out = weights.dim(1);
    require_dim(input.shape().back(), f_in, "dense input last axis (features)");
    require_dim(bias.dim(0), f_out, "dense bias axis 0");

    const std::size_t rows = input.size() / f_in;
    Shape out_shape = input.shape();
    out_shape.back() = f_out;
    BasicTensor<T> out(out_shape);
    std::vector<double> acc(f_out);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < f_out; ++j) acc[j] = bias[j];
        const T* x = input.data().data() + r * f_in;
        for (std::size_t k = 0; k < f_in; ++k) {
            const double xk = x[k];
            const T* wrow = weights.data().data() + k * f_out;
            for (std::size_t j = 0; j < f_out; ++j) acc[j] += xk * static_cast<double>(wrow[j]);
        }
        round_into<T>(acc, out.data().data() + r * f_out);
    }
    return out;
}

template <typename T>
AffineGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& grad_output) {
    const std::size_t f_in = weights.dim(0), f_out = weights.dim(1);
    const std::size_t rows = input.size() / f_in;
    require_dim(grad_output.size(), rows * f_out, "dense grad_output element count");

    AffineGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), BasicTensor<T>({f_out})};
    for (std::size_t r = 0; r < rows; ++r) {
        const T* dy = grad_output.data().data() + r * f_out;
        T* dx = g.input.data().data() + r * f_in;
        for (std::size_t k = 0; k < f_in; ++k) {
            dx[k] = static_cast<T>(dot(dy, weights.data().data() + k * f_out, f_out));
        }
    }
    std::vector<double> acc(f_out);
    for (std::size_t k = 0; k < f_in; ++k) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double xk = input[r * f_in + k];
            const T* dy = grad_output.data().data() + r * f_out;
            for (std::size_t j = 0; j < f_out; ++j) acc[j] += xk * static_cast<double>(dy[j]);
        }
        round_into<T>(acc, g.weights.data().data() + k * f_out);
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* dy = grad_output.data().data() + r * f_out;
        for (std::size_t j = 0; j < f_out; ++j) acc[j] += dy[j];
    }
    round_into<T>(acc, g.bias.data().data());
    return g;
}

namespace {

struct RowStats {
    double mean;
    double inv_std;
};

template <typename T>
RowStats row_stats(const T* x, std::size_t n, double eps) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    return {mean, 1.0 / std::sqrt(var + eps)};
}

}  // namespace

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gain, const BasicTensor<T>& shift,
                          double eps) {
    if (input.rank() == 0) throw DimensionError("layer_norm input must have at least one axis");
    const std::size_t f = input.shape().back();
    require_rank(gain, 1, "layer_norm gain");
    require_rank(shift, 1, "layer_norm shift");
    require_dim(gain.dim(0), f, "layer_norm gain axis 0");
    require_dim(shift.dim(0), f, "layer_norm shift axis 0");

    BasicTensor<T> out(input.shape());
    const std::size_t rows = input.size() / f;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = input.data().data() + r * f;
        const RowStats s = row_stats(x, f, eps);
        T* y = out.data().data() + r * f;
        for (std::size_t j = 0; j < f; ++j) {
            const double xhat = (x[j] - s.mean) * s.inv_std;
            y[j] = static_cast<T>(xhat * static_cast<double>(gain[j]) + static_cast<double>(shift[j]));
        }
    }
    return out;
}

template <typename T>
NormGrads<T> layer_norm_backward(const BasicTensor<T>& input, const BasicTensor<T>& gain,
                                 const BasicTensor<T>& grad_output, double eps) {
    const std::size_t f = input.shape().back();
    if (grad_output.shape() != input.shape()) {
        throw DimensionError("layer_norm grad_output shape " + shape_string(grad_output.shape()) +
                             " differs from input " + shape_string(input.shape()));
    }
    NormGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>({f}), BasicTensor<T>({f})};
    const std::size_t rows = input.size() / f;
    std::vector<double> dgain(f, 0.0), dshift(f, 0.0), xhat(f), dxhat(f);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = input.data().data() + r * f;
        const T* dy = grad_output.data().data() + r * f;
        const RowStats s = row_stats(x, f, eps);
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            xhat[j] = (x[j] - s.mean) * s.inv_std;
            dxhat[j] = static_cast<double>(dy[j]) * static_cast<double>(gain[j]);
            dgain[j] += static_cast<double>(dy[j]) * xhat[j];
            dshift[j] += dy[j];
            sum_dxhat += dxhat[j];
            sum_dxhat_xhat += dxhat[j] * xhat[j];
        }
        const double n = static_cast<double>(f);
        T* dx = g.input.data().data() + r * f;
        for (std::size_t j = 0; j < f; ++j) {
            dx[j] = static_cast<T>(s.inv_std / n * (n * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat));
        }
    }
    round_into<T>(dgain, g.gain.data().data());
    round_into<T>(dshift, g.shift.data().data());
    return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
    require_dim(grad_output.size(), input.size(), "relu grad_output element count");
    BasicTensor<T> g(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T{0} ? grad_output[i] : T{0};
    return g;
}

template <typename T>
BasicTensor<T> avg_pool_time(const BasicTensor<T>& input, std::size_t factor) {
    require_rank(input, 2, "avg_pool input");
    if (factor == 0 || input.dim(1) % factor != 0) {
        throw DimensionError("avg_pool input axis 1 (time): length " + std::to_string(input.dim(1)) +
                             " not divisible by factor " + std::to_string(factor));
    }
    const std::size_t channels = input.dim(0), out_len = input.dim(1) / factor;
    BasicTensor<T> out({channels, out_len});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < out_len; ++t) {
            double s = 0.0;
            for (std::size_t k = 0; k < factor; ++k) s += input.at(c, t * factor + k);
            out.at(c, t) = static_cast<T>(s / static_cast<double>(factor));
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> avg_pool_time_backward(const BasicTensor<T>& grad_output, std::size_t factor) {
    require_rank(grad_output, 2, "avg_pool grad_output");
    const std::size_t channels = grad_output.dim(0), out_len = grad_output.dim(1);
    BasicTensor<T> g({channels, out_len * factor});
    const double scale = 1.0 / static_cast<double>(factor);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const T v = static_cast<T>(static_cast<double>(grad_output.at(c, t)) * scale);
            for (std::size_t k = 0; k < factor; ++k) g.at(c, t * factor + k) = v;
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    require_rank(a, 2, "transpose input");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    BasicTensor<T> out({cols, rows});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out.at(j, i) = a.at(i, j);
    }
    return out;
}

template <typename T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>* const> parts) {
    if (parts.empty()) throw DimensionError("concat_rows needs at least one part");
    const std::size_t cols = parts.front()->dim(1);
    std::size_t rows = 0;
    for (const auto* p : parts) {
        require_rank(*p, 2, "concat_rows part");
        require_dim(p->dim(1), cols, "concat_rows part axis 1");
        rows += p->dim(0);
    }
    std::vector<T> data;
    data.reserve(rows * cols);
    for (const auto* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
    return BasicTensor<T>({rows, cols}, std::move(data));
}

template <typename T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>* const> parts) {
    if (parts.empty()) throw DimensionError("concat_cols needs at least one part");
    const std::size_t rows = parts.front()->dim(0);
    std::size_t cols = 0;
    for (const auto* p : parts) {
        require_rank(*p, 2, "concat_cols part");
        require_dim(p->dim(0), rows, "concat_cols part axis 0");
        cols += p->dim(1);
    }
    BasicTensor<T> out({rows, cols});
    std::size_t col0 = 0;
    for (const auto* p : parts) {
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < p->dim(1); ++j) out.at(i, col0 + j) = p->at(i, j);
        }
        col0 += p->dim(1);
    }
    return out;
}

template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t count) {
    require_rank(a, 2, "slice_rows input");
    if (count == 0 || begin + count > a.dim(0)) {
        throw DimensionError("slice_rows axis 0: range [" + std::to_string(begin) + "," +
                             std::to_string(begin + count) + ") outside " + std::to_string(a.dim(0)));
    }
    const std::size_t cols = a.dim(1);
    std::vector<T> data(a.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                        a.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
    return BasicTensor<T>({count, cols}, std::move(data));
}

template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t begin, std::size_t count) {
    require_rank(a, 2, "slice_cols input");
    if (count == 0 || begin + count > a.dim(1)) {
        throw DimensionError("slice_cols axis 1: range [" + std::to_string(begin) + "," +
                             std::to_string(begin + count) + ") outside " + std::to_string(a.dim(1)));
    }
    BasicTensor<T> out({a.dim(0), count});
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = a.at(i, begin + j);
    }
    return out;
}

#define PULSE_INSTANTIATE(T)                                                                                         \
    template BasicTensor<T> conv1d_dilated(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                           const ConvSpec&);                                                        \
    template ConvGrads<T> conv1d_dilated_backward(const BasicTensor<T>&, const BasicTensor<T>&, const ConvSpec&,     \
                                                  const BasicTensor<T>&);                                           \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
    template MatmulGrads<T> matmul_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
    template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> softmax_rows_backward(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);              \
    template AffineGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, double); \
    template NormGrads<T> layer_norm_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                              double);                                                              \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                             \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                             \
    template BasicTensor<T> avg_pool_time(const BasicTensor<T>&, std::size_t);                                       \
    template BasicTensor<T> avg_pool_time_backward(const BasicTensor<T>&, std::size_t);                              \
    template BasicTensor<T> transpose(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> concat_rows(std::span<const BasicTensor<T>* const>);                                     \
    template BasicTensor<T> concat_cols(std::span<const BasicTensor<T>* const>);                                     \
    template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);                             \
    template BasicTensor<T> slice_cols(const BasicTensor<T>&, std::size_t, std::size_t);

PULSE_INSTANTIATE(float)
PULSE_INSTANTIATE(double)

#undef PULSE_INSTANTIATE

}  // namespace pulse
