// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical dynamic weighting. Every scenario's loss is scaled by
// w = (1 - p_tm)^e * (1 - p_ti)^e, where p_tm (p_ti) is the batch-mean
// ground-truth probability over all supervised tokens sharing the scenario's
// time moment (time interval). Weights are constants per batch.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "uniat/core/scenario.hpp"

namespace uniat::objective {

inline constexpr double kConfidenceCeiling = 1.0 - 1e-6;

struct HdwState {
    std::array<double, kNumScenarios> p_tm{};
    std::array<double, kNumScenarios> p_ti{};
    std::array<double, kNumScenarios> w_tm{};
    std::array<double, kNumScenarios> w_ti{};
    std::array<double, kNumScenarios> w{};
};

/// losses[s] holds the per-token losses of scenario s for its supervised
/// samples only. Throws NumericalError when a time moment or time interval
/// has no supervised token in the batch.
[[nodiscard]] HdwState batch_confidences(const std::array<std::vector<double>, kNumScenarios>& losses);

/// Fills w_tm, w_ti and w from the confidences already in `state`.
[[nodiscard]] HdwState hdw_weights(HdwState state, double exponent = 0.5);

/// All weights one, confidences zero.
[[nodiscard]] HdwState uniform_weights();

}  // namespace uniat::objective
