// SPDX-License-Identifier: Apache-2.0

#include "uniat/core/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "uniat/core/error.hpp"

namespace uniat {

std::size_t Rng::below(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    // Rejection keeps the result unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double std, double bound) {
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= bound) return z * std;
    }
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::set_state(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (is.fail()) throw ValidationError("corrupt rng state");
}

}  // namespace uniat
