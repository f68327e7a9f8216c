// SPDX-License-Identifier: Apache-2.0
//
// Patch-embedding transformer encoder carrying one CLS token per scenario.
// Blocks are pre-norm: x += attn(ln1(x)); x += mix(ln2(x)), where mix sends
// patch rows through the shared FFN and each CLS row through the MoAE layer
// routed by that token's scenario. Positional embeddings apply to patches only.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniat/backbone/config.hpp"
#include "uniat/core/image.hpp"
#include "uniat/core/scenario.hpp"
#include "uniat/moae/moae.hpp"
#include "uniat/tensor/tensor.hpp"

namespace uniat::backbone {

template <typename T>
struct BlockParams {
    tensor::Tensor<T> ln1_gain, ln1_bias;
    tensor::Tensor<T> qkv_weight, qkv_bias;    // [d x 3d], [3d]
    tensor::Tensor<T> proj_weight, proj_bias;  // [d x d], [d]
    tensor::Tensor<T> ln2_gain, ln2_bias;
    tensor::Tensor<T> ffn_in_weight, ffn_in_bias;    // [d x h], [h]
    tensor::Tensor<T> ffn_out_weight, ffn_out_bias;  // [h x d], [d]
    std::optional<moae::MoaeLayer<T>> moae;
};

template <typename T>
struct BackboneParams {
    ModelConfig config;
    tensor::Tensor<T> patch_weight, patch_bias;  // [patch_dim x d], [d]
    tensor::Tensor<T> pos_embed;                 // [num_patches x d]
    tensor::Tensor<T> cls_tokens;                // [num_cls x d]
    std::vector<BlockParams<T>> blocks;
    tensor::Tensor<T> final_gain, final_bias;

    /// Every trainable tensor with a stable dotted name. Shared attribute
    /// layers appear once.
    [[nodiscard]] std::vector<tensor::NamedTensor<T>> named_parameters() const;
};

template <typename T>
struct BackboneOutput {
    /// Final-layer CLS feature per scenario, each [batch x d]. With a shared
    /// token all six entries alias the same tensor.
    std::array<tensor::Tensor<T>, kNumScenarios> cls;
    tensor::Tensor<T> patches;  // [(batch * num_patches) x d]
};

/// Splits an image into non-overlapping patches in row-major patch order;
/// each row is the patch flattened as (row, col, channel).
template <typename T>
tensor::Tensor<T> patchify(const Image& image, const ModelConfig& config);

/// Inverse of patchify for the given config.
template <typename T>
Image unpatchify(const tensor::Tensor<T>& patches, const ModelConfig& config);

/// Truncated normal (std = config.init_std, cut at 2 std) for embeddings and
/// projections, zero biases, unit layernorm gains. Deterministic in seed.
template <typename T>
BackboneParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
BackboneOutput<T> forward(tensor::Tape<T>& tape, const BackboneParams<T>& params, std::span<const Image> batch,
                          moae::MoaeStats* stats = nullptr);

/// Same as above for pre-patchified input [(batch * num_patches) x patch_dim].
template <typename T>
BackboneOutput<T> forward_patches(tensor::Tape<T>& tape, const BackboneParams<T>& params,
                                  const tensor::Tensor<T>& patches, std::size_t batch,
                                  moae::MoaeStats* stats = nullptr);

}  // namespace uniat::backbone
