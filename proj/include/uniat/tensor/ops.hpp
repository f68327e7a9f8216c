// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every op computes its forward value eagerly and,
// when the tape tracks one of its inputs, records an adjoint that accumulates
// into the inputs' gradients. Matrices are row-major; "rows" of an n-d tensor
// are slices along the last axis.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "uniat/tensor/tensor.hpp"

namespace uniat::tensor {

/// Names of every primitive in this header, in declaration order.
[[nodiscard]] std::span<const std::string_view> primitive_names();

/// a[m x k] * b[k x n].
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// x[m x k] * w[k x n] + bias[n]; bias may be undefined.
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// x[(r*m) x n] + tile[m x n] repeated r times down the rows.
template <typename T>
Tensor<T> add_tiled(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& tile);

/// Elementwise product.
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

/// x * Phi(x) with the exact normal CDF.
template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x);

/// Max-shifted softmax along `axis`.
template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis);

/// Normalizes over the last axis, then applies gain[n] and bias[n].
template <typename T>
Tensor<T> layernorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps);

template <typename T>
struct BatchMoments {
    std::vector<T> mean;
    std::vector<T> var;  // biased
    std::size_t count = 0;
};

/// Training-mode batch normalization of x[m x n] over its m rows. `moments`
/// receives the batch statistics when non-null. bias may be undefined.
template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps, BatchMoments<T>* moments = nullptr);

/// Scalar sum of all elements.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x);

/// Selects rows of x[m x n]; indices may repeat.
template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> index);

/// Places row i of x at output row index[i] of a zero [total_rows x n] matrix.
/// Repeated indices accumulate.
template <typename T>
Tensor<T> scatter_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> index,
                       std::size_t total_rows);

/// Multiplies row i of x[m x n] by s[i]; s has m elements.
template <typename T>
Tensor<T> scale_rows(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s);

/// out[i] = x[i, col[i]] for x[m x n].
template <typename T>
Tensor<T> pick(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> col);

/// Keeps the k largest entries of every row (lowest index wins ties) and
/// zeroes the rest. No renormalization.
template <typename T>
Tensor<T> topk_mask(Tape<T>& tape, const Tensor<T>& x, std::size_t k);

/// Multi-head scaled dot-product self-attention.
///   qkv: [(batch*tokens) x 3d], columns ordered [q | k | v], heads split each
///        block into contiguous d/heads slices.
///   isolated_prefix: the first `isolated_prefix` tokens of every sequence do
///        not attend to one another (each still attends to itself and to all
///        later tokens). 0 gives full attention.
/// Returns [(batch*tokens) x d].
template <typename T>
Tensor<T> attention(Tape<T>& tape, const Tensor<T>& qkv, std::size_t batch, std::size_t tokens,
                    std::size_t heads, std::size_t isolated_prefix = 0);

/// Negative log of the softmax probability of target[i] restricted to the
/// columns with candidates[i*n + j] != 0 (the target is always a candidate).
/// logits: [m x n]; returns [m].
template <typename T>
Tensor<T> restricted_nll(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::size_t> target,
                         std::span<const std::uint8_t> candidates);

}  // namespace uniat::tensor
