#pragma once

#include <vector>

#include "uidiff/nn/tensor.hpp"

namespace uidiff::nn {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// x[..., D] + v[D] broadcast over leading dims.
Tensor add_lastdim(const Tensor& x, const Tensor& v);
/// x[B, N, D] + v[B, D] broadcast over N.
Tensor add_per_row(const Tensor& x, const Tensor& v);
/// x[B, C, H, W] + v[B, C] broadcast over H, W.
Tensor add_channel(const Tensor& x, const Tensor& v);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// y = x W^T + b for x[..., in], W[out, in], optional b[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// x[B, Ci, H, W] * w[Co, Ci, k, k] + b[Co]; square kernel, symmetric padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
/// Nearest-neighbour 2x upsampling of [B, C, H, W].
Tensor upsample2x(const Tensor& x);
/// 2x2 average pooling of [B, C, H, W] (H, W even).
Tensor avgpool2x(const Tensor& x);

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Rows of table[V, D] selected by ids, reshaped to out_shape (last dim D).
Tensor embedding(const Tensor& table, const std::vector<int>& ids, Shape out_shape);

/// Concatenate [B, Ca, H, W] and [B, Cb, H, W] along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// [B, C, H, W] -> [B, H*W, C] and back.
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& x, int height, int width);
/// Mean over the token axis: [B, N, D] -> [B, D].
Tensor mean_tokens(const Tensor& x);

/// Multi-head scaled dot-product attention. q[B, Nq, D], k/v[B, Nk, D].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Sum over rows of -log softmax(logits)[target]; rows with target < 0 are ignored.
Tensor cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets);

/// Row-wise softmax of a [N, V] matrix (no graph; for sampling).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace uidiff::nn
