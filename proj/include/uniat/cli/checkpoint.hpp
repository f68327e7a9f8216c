// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint:
//   "UNIATCKP" | u32 version | u64 step | str config_json | str rng_state |
//   u32 count | count x { str name | u32 ndim | u64 dims[ndim] | f32 values }
// with str = u32 length + bytes, all integers and floats little-endian.
// Arrays are model parameters by name, "<head>.bn.running_mean|var" and
// "opt.velocity.<param>".

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uniat/objective/objective.hpp"

namespace uniat::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> values;

    friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t step = 0;
    std::string config_json;
    std::string rng_state;
    std::vector<NamedArray> arrays;

    [[nodiscard]] const NamedArray* find(const std::string& name) const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

[[nodiscard]] std::vector<std::byte> serialize(const Checkpoint& ckpt);
/// Throws ValidationError on a bad magic, version, or truncated input.
[[nodiscard]] Checkpoint deserialize(std::span<const std::byte> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters plus BNNeck running statistics.
[[nodiscard]] std::vector<NamedArray> model_arrays(const objective::Model<float>& model);

/// Copies every model array from the checkpoint; names and shapes must match.
void restore_model(const Checkpoint& ckpt, objective::Model<float>& model);

}  // namespace uniat::cli
