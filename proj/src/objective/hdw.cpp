// SPDX-License-Identifier: Apache-2.0

#include "uniat/objective/hdw.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniat/core/error.hpp"

namespace uniat::objective {

HdwState batch_confidences(const std::array<std::vector<double>, kNumScenarios>& losses) {
    std::array<double, 3> tm_sum{}, tm_n{};
    std::array<double, 2> ti_sum{}, ti_n{};
    for (Scenario s : kAllScenarios) {
        const auto tm = static_cast<std::size_t>(s.tm), ti = static_cast<std::size_t>(s.ti);
        for (double l : losses[s.index()]) {
            const double p = std::exp(-l);
            tm_sum[tm] += p;
            tm_n[tm] += 1;
            ti_sum[ti] += p;
            ti_n[ti] += 1;
        }
    }
    HdwState out;
    for (Scenario s : kAllScenarios) {
        const auto tm = static_cast<std::size_t>(s.tm), ti = static_cast<std::size_t>(s.ti);
        if (tm_n[tm] == 0 || ti_n[ti] == 0) {
            throw NumericalError("degenerate batch: no supervised token shares the attributes of " + to_string(s));
        }
        out.p_tm[s.index()] = std::clamp(tm_sum[tm] / tm_n[tm], 0.0, kConfidenceCeiling);
        out.p_ti[s.index()] = std::clamp(ti_sum[ti] / ti_n[ti], 0.0, kConfidenceCeiling);
    }
    return out;
}

HdwState hdw_weights(HdwState state, double exponent) {
    for (std::size_t s = 0; s < kNumScenarios; ++s) {
        state.w_tm[s] = std::pow(1.0 - state.p_tm[s], exponent);
        state.w_ti[s] = std::pow(1.0 - state.p_ti[s], exponent);
        state.w[s] = state.w_tm[s] * state.w_ti[s];
    }
    return state;
}

HdwState uniform_weights() {
    HdwState out;
    out.w_tm.fill(1.0);
    out.w_ti.fill(1.0);
    out.w.fill(1.0);
    return out;
}

}  // namespace uniat::objective
