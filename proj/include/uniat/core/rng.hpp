// SPDX-License-Identifier: Apache-2.0
//
// Portable random stream. Distributions are implemented here on top of the raw
// mt19937_64 output because the standard library distributions are not
// reproducible across implementations.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>

namespace uniat {

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (one draw per call, no cached spare).
    double normal();

    /// Normal with the given std, resampled until |x| <= bound * std.
    double truncated_normal(double std, double bound = 2.0);

    template <typename U>
    void shuffle(std::span<U> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Derives an independent child stream seeded from this stream.
    Rng split() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ULL); }

    [[nodiscard]] std::string state() const;
    void set_state(const std::string& text);

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace uniat
