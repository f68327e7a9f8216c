// SPDX-License-Identifier: Apache-2.0

#include "uniat/data/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "uniat/core/error.hpp"

namespace uniat::data {

PkSampler::PkSampler(const DatasetManifest& manifest) {
    std::map<std::int64_t, std::map<std::pair<Modality, std::int64_t>, std::vector<std::size_t>>> by_person;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (r.split == Split::train) by_person[r.person_id][{r.modality, r.clothes_id}].push_back(i);
    }
    for (auto& [pid, groups] : by_person) {
        persons_.push_back(pid);
        auto& out = groups_.emplace_back();
        for (auto& [key, recs] : groups) out.push_back(Group{key.first, key.second, std::move(recs)});
    }
}

std::vector<std::size_t> PkSampler::sample(std::size_t p, std::size_t k, Rng& rng) const {
    if (p == 0 || k == 0) throw ValidationError("pk_sample: P and K must be positive");
    if (p > persons_.size()) {
        throw ValidationError("pk_sample: insufficient identities, " + std::to_string(persons_.size()) +
                              " in the train split but P = " + std::to_string(p));
    }
    std::vector<std::size_t> ids(persons_.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    // Partial Fisher-Yates: the first p entries are a uniform draw without replacement.
    for (std::size_t i = 0; i < p; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);

    std::vector<std::size_t> batch;
    batch.reserve(p * k);
    for (std::size_t n = 0; n < p; ++n) {
        const auto& groups = groups_[ids[n]];
        std::vector<std::size_t> pending(groups.size());
        for (std::size_t g = 0; g < pending.size(); ++g) pending[g] = g;
        rng.shuffle(std::span<std::size_t>(pending));
        std::vector<std::size_t> order;
        std::set<Modality> seen_mod;
        std::set<std::int64_t> seen_clothes;
        while (!pending.empty()) {
            auto score = [&](std::size_t g) {
                return 2 * !seen_mod.count(groups[g].modality) + !seen_clothes.count(groups[g].clothes);
            };
            auto best = std::max_element(pending.begin(), pending.end(),
                                         [&](std::size_t a, std::size_t b) { return score(a) < score(b); });
            order.push_back(*best);
            seen_mod.insert(groups[*best].modality);
            seen_clothes.insert(groups[*best].clothes);
            pending.erase(best);
        }
        for (std::size_t i = 0; i < k; ++i) {
            const auto& recs = groups[order[i % order.size()]].records;
            batch.push_back(recs[rng.below(recs.size())]);
        }
    }
    return batch;
}

std::vector<std::size_t> pk_sample(const DatasetManifest& manifest, std::size_t p, std::size_t k, Rng& rng) {
    return PkSampler(manifest).sample(p, k, rng);
}

Image augment(const Image& image, Rng& rng, const AugmentFlags& flags) {
    Image out = image;
    const std::size_t h = image.height, w = image.width, ch = image.channels;
    if (flags.flip) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = image.at(y, w - 1 - x, c);
    }
    if (flags.pad_crop) {
        const Image src = out;
        const auto oy = static_cast<std::ptrdiff_t>(rng.below(2 * kCropPadding + 1)) - std::ptrdiff_t(kCropPadding);
        const auto ox = static_cast<std::ptrdiff_t>(rng.below(2 * kCropPadding + 1)) - std::ptrdiff_t(kCropPadding);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::ptrdiff_t sy = std::ptrdiff_t(y) + oy, sx = std::ptrdiff_t(x) + ox;
                const bool inside = sy >= 0 && sx >= 0 && sy < std::ptrdiff_t(h) && sx < std::ptrdiff_t(w);
                for (std::size_t c = 0; c < ch; ++c)
                    out.at(y, x, c) = inside ? src.at(std::size_t(sy), std::size_t(sx), c) : 0.0f;
            }
    }
    if (flags.erase) {
        const double area = double(h * w);
        std::size_t eh = 0, ew = 0;
        for (int attempt = 0; attempt < 100 && eh == 0; ++attempt) {
            const double target = rng.uniform(kEraseMinArea, kEraseMaxArea) * area;
            const double aspect = std::exp(rng.uniform(std::log(0.3), std::log(3.3)));
            const auto th = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
            const auto tw = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
            const double frac = double(th * tw) / area;
            if (th >= 1 && tw >= 1 && th <= h && tw <= w && frac >= kEraseMinArea && frac <= kEraseMaxArea) {
                eh = th;
                ew = tw;
            }
        }
        if (eh == 0) {  // tiny images: smallest square inside the band, else a single pixel
            eh = ew = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(kEraseMinArea * area))));
            if (double(eh * ew) > kEraseMaxArea * area) eh = ew = 1;
        }
        const std::size_t y0 = rng.below(h - eh + 1), x0 = rng.below(w - ew + 1);
        for (std::size_t y = y0; y < y0 + eh; ++y)
            for (std::size_t x = x0; x < x0 + ew; ++x)
                for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = 0.0f;
    }
    return out;
}

}  // namespace uniat::data
