// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace uniat {

/// Float pixel grid, row-major with interleaved channels: (y * width + x) * channels + c.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    [[nodiscard]] float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    [[nodiscard]] float at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    [[nodiscard]] bool empty() const noexcept { return pixels.empty(); }

    friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace uniat
