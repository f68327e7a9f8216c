// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniat/core/scenario.hpp"
#include "uniat/eval/protocol.hpp"

namespace uniat::eval {

/// Percentages in [0, 100].
struct ScenarioMetrics {
    double rank1 = 0;
    double rank5 = 0;
    double rank10 = 0;
    double map = 0;
    std::size_t num_queries = 0;
    std::size_t dropped_queries = 0;
};

struct ScenarioResult {
    Scenario scenario;
    ScenarioMetrics metrics;
};

struct MetricsReport {
    std::vector<ScenarioResult> scenarios;
    std::optional<ScenarioMetrics> any_time;  // only when all six are present
};

/// Worker count from UNIAT_NUM_WORKERS (default 1, minimum 1).
[[nodiscard]] std::size_t env_workers();

/// Row-major features: query [nq x dim], gallery [ng x dim], rows unit norm.
/// Ranks every query's gallery by cosine distance (ties by gallery index)
/// after removing junk and excluded items. Throws ValidationError for a
/// query without positives. Results do not depend on `workers`.
[[nodiscard]] ScenarioMetrics rank_and_score(std::span<const float> query, std::span<const float> gallery,
                                             std::size_t dim, const RelevanceMatrix& relevance,
                                             std::size_t workers = 1);

/// Independent quadratic-time mAP (percent) for small instances.
[[nodiscard]] double oracle_map(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                                const RelevanceMatrix& relevance);

/// Independent Rank-k (percent) by counting, per query, the kept items
/// strictly ahead of its best positive.
[[nodiscard]] double oracle_cmc(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                                const RelevanceMatrix& relevance, std::size_t k);

/// Unweighted mean over exactly the six scenarios. Throws ValidationError
/// when one is missing or repeated.
[[nodiscard]] ScenarioMetrics any_time(std::span<const ScenarioResult> results);

/// Fills any_time when all six scenarios are present.
void finalize(MetricsReport& report);

[[nodiscard]] std::string to_json(const MetricsReport& report);
[[nodiscard]] std::string to_csv(const MetricsReport& report);
/// Human-readable table, 2 decimals.
[[nodiscard]] std::string to_table(const MetricsReport& report);
[[nodiscard]] MetricsReport report_from_json(const std::string& text);

/// Flat float32 little-endian [rows x cols] at `path` and a text sidecar
/// `<path>.txt` holding "rows N", "cols D" and one sample id per line.
void write_feature_dump(const std::filesystem::path& path, std::span<const float> features, std::size_t rows,
                        std::size_t cols, std::span<const std::string> sample_ids);

}  // namespace uniat::eval
