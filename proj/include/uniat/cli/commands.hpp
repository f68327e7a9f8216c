// SPDX-License-Identifier: Apache-2.0
//
// Subcommands behind the `uniat` executable. Each cmd_* does the work and
// throws; run_cli parses arguments and maps exceptions to exit codes
// (1 usage, 2 validation or I/O, 3 numerical).

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "uniat/cli/config.hpp"
#include "uniat/cli/grad_suite.hpp"
#include "uniat/eval/metrics.hpp"

namespace uniat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

/// Build-time `git describe` string.
[[nodiscard]] std::string code_version();

/// Writes manifest.jsonl, its image blob and manifest.digest into out_dir.
/// Returns the manifest path.
std::filesystem::path cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_dir);

/// Trains into out_dir: config.json (resolved), manifest_digest.txt,
/// version.txt, train_log.jsonl, checkpoint.ckpt. Uses config.data.manifest
/// when set and otherwise generates the synthetic corpus under out_dir/data.
/// Returns the final checkpoint path.
std::filesystem::path cmd_train(const RunConfig& config, const std::filesystem::path& out_dir,
                                std::ostream* progress = nullptr);

struct EvalRequest {
    std::filesystem::path checkpoint;
    /// Empty: the manifest named by the checkpoint's config, or its
    /// synthetic corpus regenerated.
    std::filesystem::path manifest;
    std::vector<Scenario> scenarios{kAllScenarios.begin(), kAllScenarios.end()};
    std::filesystem::path out_dir;
    bool deterministic = false;
};

/// Writes metrics.json and metrics.csv into out_dir.
eval::MetricsReport cmd_eval(const EvalRequest& request);

/// Converts a metrics JSON file to "json", "csv" or "table".
[[nodiscard]] std::string cmd_export_metrics(const std::filesystem::path& metrics, const std::string& format);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace uniat::cli
