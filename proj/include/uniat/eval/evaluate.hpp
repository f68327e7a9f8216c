// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "uniat/data/manifest.hpp"
#include "uniat/eval/metrics.hpp"
#include "uniat/eval/protocol.hpp"
#include "uniat/objective/objective.hpp"

namespace uniat::eval {

inline constexpr std::size_t kFeatureBatch = 64;

/// Post-BNNeck features of every scenario token for the given records,
/// L2-normalized per row. Batches are fixed-size and distributed over
/// `workers` threads; output is independent of the worker count.
template <typename T>
[[nodiscard]] std::array<std::vector<float>, kNumScenarios> extract_all_features(
    const objective::Model<T>& model, const data::DatasetManifest& manifest, std::span<const std::size_t> records,
    std::size_t workers = 1);

/// Rows for one scenario token.
template <typename T>
[[nodiscard]] std::vector<float> extract_features(const objective::Model<T>& model,
                                                  const data::DatasetManifest& manifest,
                                                  std::span<const std::size_t> records, Scenario scenario,
                                                  std::size_t workers = 1);

void l2_normalize_rows(std::span<float> rows, std::size_t dim);

/// Builds each requested protocol, extracts features once and scores.
template <typename T>
[[nodiscard]] MetricsReport evaluate(const objective::Model<T>& model, const data::DatasetManifest& manifest,
                                     std::span<const Scenario> scenarios, const ProtocolFlags& flags = {},
                                     std::size_t workers = 1);

}  // namespace uniat::eval
