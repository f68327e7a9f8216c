// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "uniat/core/image.hpp"
#include "uniat/core/rng.hpp"
#include "uniat/data/manifest.hpp"

namespace uniat::data {

/// Identity-balanced batches from the train split: P distinct persons drawn
/// uniformly, K records each. A person's records are grouped by (modality,
/// clothes); groups are visited round-robin in an order that covers an unseen
/// modality first, then an unseen outfit, so K >= 2 spans both modalities
/// whenever the person has them.
class PkSampler {
public:
    explicit PkSampler(const DatasetManifest& manifest);

    [[nodiscard]] std::size_t num_persons() const noexcept { return persons_.size(); }

    /// Record indices, grouped by person. Throws ValidationError when the
    /// split has fewer than P persons or P or K is zero.
    [[nodiscard]] std::vector<std::size_t> sample(std::size_t p, std::size_t k, Rng& rng) const;

private:
    struct Group {
        Modality modality;
        std::int64_t clothes;
        std::vector<std::size_t> records;
    };
    std::vector<std::int64_t> persons_;
    std::vector<std::vector<Group>> groups_;
};

[[nodiscard]] std::vector<std::size_t> pk_sample(const DatasetManifest& manifest, std::size_t p, std::size_t k,
                                                 Rng& rng);

struct AugmentFlags {
    bool flip = false;
    bool pad_crop = false;
    bool erase = false;
};

inline constexpr std::size_t kCropPadding = 2;
inline constexpr double kEraseMinArea = 0.02;
inline constexpr double kEraseMaxArea = 0.20;

/// Applies the flagged transforms in the order flip, pad_crop, erase.
/// Padding is zero; the crop offset and erase rectangle come from rng.
[[nodiscard]] Image augment(const Image& image, Rng& rng, const AugmentFlags& flags);

}  // namespace uniat::data
