#include "pulse/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace pulse::oracle {

Mat conv1d(const Mat& x, const Mat& w, const Mat& b, std::size_t dilation, std::size_t padding) {
    const std::size_t in_ch = x.dim(0), len = x.dim(1);
    const std::size_t out_ch = w.dim(0), k = w.dim(2);
    if (w.dim(1) != in_ch || b.dim(0) != out_ch) throw std::invalid_argument("oracle::conv1d: shape mismatch");
    const long out_len = static_cast<long>(len + 2 * padding) - static_cast<long>((k - 1) * dilation);
    if (out_len <= 0) throw std::invalid_argument("oracle::conv1d: input too short");
    Mat y({out_ch, static_cast<std::size_t>(out_len)});
    for (std::size_t m = 0; m < out_ch; ++m) {
        for (long t = 0; t < out_len; ++t) {
            double s = b[m];
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t l = 0; l < in_ch; ++l) {
                    const long src = t + static_cast<long>((k - 1) * dilation) - static_cast<long>(padding) -
                                     static_cast<long>(dilation * i);
                    if (src < 0 || src >= static_cast<long>(len)) continue;
                    s += x.at(l, static_cast<std::size_t>(src)) * w.at(m, l, i);
                }
            }
            y.at(m, static_cast<std::size_t>(t)) = s;
        }
    }
    return y;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.dim(1) != b.dim(0)) throw std::invalid_argument("oracle::matmul: inner dimension mismatch");
    Mat c({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    }
    return c;
}

Mat dense(const Mat& x, const Mat& w, const Mat& b) {
    Mat y = matmul(x, w);
    for (std::size_t i = 0; i < y.dim(0); ++i) {
        for (std::size_t j = 0; j < y.dim(1); ++j) y.at(i, j) += b[j];
    }
    return y;
}

Mat softmax_rows(const Mat& a) {
    Mat y(a.shape());
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        double hi = a.at(i, 0);
        for (std::size_t j = 1; j < a.dim(1); ++j) hi = std::max(hi, a.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < a.dim(1); ++j) z += std::exp(a.at(i, j) - hi);
        for (std::size_t j = 0; j < a.dim(1); ++j) y.at(i, j) = std::exp(a.at(i, j) - hi) / z;
    }
    return y;
}

Mat layer_norm(const Mat& x, const Mat& gain, const Mat& shift, double eps) {
    const std::size_t n = x.dim(1);
    Mat y(x.shape());
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
        var /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) y.at(i, j) = gain[j] * (x.at(i, j) - mean) / std::sqrt(var + eps) + shift[j];
    }
    return y;
}

AttentionOut attention(const Mat& q_seq, const Mat& kv_seq, const AttentionWeights& w, std::size_t heads) {
    const Mat q = dense(q_seq, w.wq, w.bq);
    const Mat k = dense(kv_seq, w.wk, w.bk);
    const Mat v = dense(kv_seq, w.wv, w.bv);
    const std::size_t d_model = q.dim(1), dh = d_model / heads;
    const std::size_t tq = q.dim(0), tk = k.dim(0);

    AttentionOut out;
    Mat joined({tq, d_model});
    for (std::size_t h = 0; h < heads; ++h) {
        Mat scores({tq, tk});
        for (std::size_t i = 0; i < tq; ++i) {
            for (std::size_t j = 0; j < tk; ++j) {
                double s = 0.0;
                for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += q.at(i, c) * k.at(j, c);
                scores.at(i, j) = s / std::sqrt(static_cast<double>(dh));
            }
        }
        Mat a = softmax_rows(scores);
        for (std::size_t i = 0; i < tq; ++i) {
            for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < tk; ++j) s += a.at(i, j) * v.at(j, c);
                joined.at(i, c) = s;
            }
        }
        out.weights.push_back(std::move(a));
    }
    out.output = dense(joined, w.wo, w.bo);
    return out;
}

}  // namespace pulse::oracle
