// SPDX-License-Identifier: Apache-2.0
//
// The training loop: PK batches, augmentation, the scenario objective, and
// SGD with momentum under a warm-up + cosine schedule. Single-threaded, so a
// fixed config always replays the same arithmetic.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "uniat/cli/checkpoint.hpp"
#include "uniat/cli/config.hpp"
#include "uniat/data/manifest.hpp"
#include "uniat/objective/labels.hpp"

namespace uniat::cli {

struct StepRecord {
    std::size_t step = 0;
    double lr = 0;
    double total = 0;
    std::array<double, kNumScenarios> loss{};  // NaN when the batch did not supervise it
    objective::HdwState hdw;
};

struct TrainOutput {
    objective::Model<float> model;
    std::vector<StepRecord> log;
    Checkpoint checkpoint;
};

/// Dense labels over the train split, in record order.
[[nodiscard]] objective::LabelRegistry train_registry(const data::DatasetManifest& manifest);

/// Fills the class counts from the manifest and checks the image geometry.
[[nodiscard]] RunConfig resolve_config(RunConfig config, const data::DatasetManifest& manifest);

/// Expects a resolved config. With a non-empty out_dir, writes
/// train_log.jsonl, checkpoints/step_<n>.ckpt at the configured interval and
/// checkpoint.ckpt at the end. A non-finite loss writes nan_batch.json and
/// throws NumericalError.
TrainOutput train(const RunConfig& config, const data::DatasetManifest& manifest,
                  const std::filesystem::path& out_dir = {}, std::ostream* progress = nullptr);

[[nodiscard]] std::string log_line(const StepRecord& record);

/// Rebuilds the model described by the checkpoint's embedded config.
[[nodiscard]] objective::Model<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace uniat::cli
