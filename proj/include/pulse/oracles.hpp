#pragma once

// Slow reference implementations written straight from the defining sums,
// with no shared code paths with tensorcore. Used to cross-check the real
// kernels.

#include <cstddef>
#include <vector>

#include "pulse/tensor.hpp"

namespace pulse::oracle {

using Mat = BasicTensor<double>;

/// x [L,T], w [M,L,K], b [M] -> [M, T + 2p - (K-1)d]
Mat conv1d(const Mat& x, const Mat& w, const Mat& b, std::size_t dilation, std::size_t padding);

Mat matmul(const Mat& a, const Mat& b);

/// x [N,F_in], w [F_in,F_out], b [F_out]
Mat dense(const Mat& x, const Mat& w, const Mat& b);

Mat softmax_rows(const Mat& a);

Mat layer_norm(const Mat& x, const Mat& gain, const Mat& shift, double eps);

struct AttentionWeights {
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
};

struct AttentionOut {
    Mat output;
    std::vector<Mat> weights;  // per head, [T_q, T_kv]
};

/// Multi-head scaled dot-product attention with input and output projections.
AttentionOut attention(const Mat& q_seq, const Mat& kv_seq, const AttentionWeights& w, std::size_t heads);

}  // namespace pulse::oracle
