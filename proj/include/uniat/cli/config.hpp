// SPDX-License-Identifier: Apache-2.0
//
// Everything a run needs, serializable to JSON. Loading starts from the
// defaults (or a named preset) and overrides only the keys present; unknown
// keys are rejected so typos fail loudly.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "uniat/backbone/config.hpp"
#include "uniat/data/sampler.hpp"
#include "uniat/data/synthetic.hpp"
#include "uniat/eval/protocol.hpp"
#include "uniat/objective/objective.hpp"

namespace uniat::cli {

struct OptimizerConfig {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    /// Linear warm-up length as a fraction of the total steps.
    double warmup_fraction = 0.05;
    std::size_t steps = 2000;
    /// When nonzero, overrides steps with epochs * ceil(train records / batch).
    std::size_t epochs = 0;
    std::size_t persons_per_batch = 8;
    std::size_t instances_per_person = 8;
    /// 0 writes only the final checkpoint.
    std::size_t checkpoint_every = 0;

    [[nodiscard]] std::size_t batch_size() const noexcept { return persons_per_batch * instances_per_person; }
    [[nodiscard]] std::size_t total_steps(std::size_t train_records) const;
    [[nodiscard]] std::size_t warmup_steps(std::size_t total) const;
};

struct DataConfig {
    /// Existing manifest; empty means generate from `synthetic`.
    std::string manifest;
    data::SyntheticGenConfig synthetic;
    data::AugmentFlags augment{true, true, true};
};

struct RunConfig {
    backbone::ModelConfig model;
    objective::ObjectiveConfig objective;
    OptimizerConfig optimizer;
    DataConfig data;
    eval::ProtocolFlags protocol;
    std::uint64_t seed = 0;
    std::string out = "run";
    bool deterministic = false;

    /// Structural checks that do not need the manifest.
    void validate() const;
};

/// "desk" (the defaults), "full-scale" (120 epochs at lr 0.008, batch 64 from 8
/// ids), "small" (d=32, 2 layers, 800 steps at batch 32), "bench" (d=48,
/// 3 layers, 1500 steps at batch 32).
[[nodiscard]] RunConfig preset(std::string_view name);

/// "full" enables scenario loss, MoAE and HDW; "baseline" is one shared
/// token with a plain identity loss and no MoAE or HDW.
void apply_variant(RunConfig& config, std::string_view variant);

[[nodiscard]] std::string to_json(const RunConfig& config);
/// Optional top-level "preset" picks the starting point.
[[nodiscard]] RunConfig config_from_json(std::string_view text);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// Learning rate at 0-based step t: linear warm-up to lr, then cosine to zero.
[[nodiscard]] double scheduled_lr(const OptimizerConfig& opt, std::size_t step, std::size_t total);

}  // namespace uniat::cli
