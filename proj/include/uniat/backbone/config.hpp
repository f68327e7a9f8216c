// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "uniat/moae/moae.hpp"

namespace uniat::backbone {

struct ModelConfig {
    std::size_t image_height = 32;
    std::size_t image_width = 16;
    std::size_t channels = 3;
    std::size_t patch_size = 4;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t ffn_hidden = 128;
    std::size_t experts_per_scenario = 2;
    std::size_t top_k = 1;
    std::uint64_t seed = 0;

    /// CLS tokens take the MoAE path; otherwise they share the patch FFN.
    bool use_moae = true;
    /// A single CLS token stands in for all six scenarios.
    bool shared_token = false;
    /// Masks attention between distinct CLS tokens.
    bool isolate_cls = false;
    moae::AttributeOrder attribute_order = moae::AttributeOrder::moment_inner;
    double init_std = 0.02;

    void validate() const;

    [[nodiscard]] std::size_t num_patches() const noexcept {
        return (image_height / patch_size) * (image_width / patch_size);
    }
    [[nodiscard]] std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }
    [[nodiscard]] std::size_t num_cls_tokens() const noexcept { return shared_token ? 1 : 6; }
    [[nodiscard]] std::size_t tokens_per_image() const noexcept { return num_cls_tokens() + num_patches(); }

    [[nodiscard]] moae::MoaeConfig moae_config() const {
        return moae::MoaeConfig{embed_dim, ffn_hidden, experts_per_scenario, top_k, attribute_order};
    }
};

}  // namespace uniat::backbone
