// SPDX-License-Identifier: Apache-2.0
//
// Synthetic pedestrian corpus from latent factors. Each person has a body
// vector rendered as a grayscale shape map visible in both modalities; each
// of their outfits has a clothes vector rendered as colour fields under RGB
// cameras and as a weak grayscale texture under IR cameras. Cameras apply a
// gain and an offset. Identity is therefore recoverable across outfits only
// from the body map, and colour is informative only within RGB.
//
// Every outfit is worn on its own day, has a home modality (alternating per
// person so both modalities occur) and is captured by up to two home-modality
// cameras plus, with probability cross_modality_prob, one camera of the other
// modality. Each (person, outfit, camera) cell holds images_per_cell images;
// for test persons the first half are queries and the rest gallery.

#pragma once

#include <cstddef>
#include <cstdint>

#include "uniat/data/manifest.hpp"

namespace uniat::data {

struct SyntheticGenConfig {
    std::size_t num_train_ids = 32;
    std::size_t num_test_ids = 16;
    std::size_t clothes_min = 2;
    std::size_t clothes_max = 4;
    std::size_t num_rgb_cameras = 2;
    std::size_t num_ir_cameras = 2;
    std::size_t images_per_cell = 6;
    double cross_modality_prob = 0.8;
    std::size_t body_dim = 8;
    std::size_t clothes_dim = 8;
    double noise = 0.05;
    std::size_t image_height = 32;
    std::size_t image_width = 16;
    std::uint64_t seed = 0;

    /// Throws ValidationError for infeasible settings.
    void validate() const;
};

[[nodiscard]] DatasetManifest generate_synthetic(const SyntheticGenConfig& config);

}  // namespace uniat::data
