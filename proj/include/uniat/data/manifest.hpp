// SPDX-License-Identifier: Apache-2.0
//
// Dataset manifest: labelled sample records plus the person, clothes and
// camera registries they reference.
//
// On disk a manifest is JSON Lines. The first line is a header object:
//   {"format": "uniat-manifest", "version": 1,
//    "image": {"height": H, "width": W, "channels": C},
//    "blob": "<name>.images.f32" | null,
//    "persons": [id, ...],
//    "clothes": [[person, clothes], ...],
//    "cameras": [{"id": id, "modality": "RGB" | "IR"}, ...]}
// and every following line is one record:
//   {"person": int, "clothes": int, "modality": "RGB" | "IR", "camera": int,
//    "day": int, "split": "train" | "val" | "query" | "gallery",
//    "offset": int}            (float index into the blob; H*W*C float32 LE)
//   or "path": "<opaque>"      (external image reference, not decoded)
// The blob path is relative to the manifest's directory.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "uniat/core/image.hpp"
#include "uniat/core/scenario.hpp"

namespace uniat::data {

enum class Split : std::uint8_t { train, val, query, gallery };

[[nodiscard]] std::string_view to_string(Split split) noexcept;
[[nodiscard]] Split parse_split(std::string_view text);

struct SampleRecord {
    std::int64_t person_id = 0;
    std::int64_t clothes_id = 0;  // scoped to person_id
    Modality modality = Modality::RGB;
    std::int64_t camera_id = 0;
    std::int64_t timestamp = 0;  // day index
    Split split = Split::train;
    Image image;             // empty for external references
    std::string image_path;  // opaque, unused when image is inline

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetManifest {
    std::size_t image_height = 32;
    std::size_t image_width = 16;
    std::size_t channels = 3;
    std::set<std::int64_t> persons;
    std::set<std::pair<std::int64_t, std::int64_t>> clothes;  // (owner, clothes)
    std::map<std::int64_t, Modality> cameras;
    std::vector<SampleRecord> records;

    /// Referential integrity, camera/modality agreement, image sizes, and
    /// person-disjoint train versus query/gallery splits. Throws
    /// ValidationError listing offending record indices.
    void validate() const;

    [[nodiscard]] std::vector<std::size_t> indices(Split split) const;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Writes `path` and, when any record carries pixels, the sibling blob
/// `<stem>.images.f32`. Both writes are atomic.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Parses and validates. Errors name the line (1-based) or record index.
[[nodiscard]] DatasetManifest load_manifest(const std::filesystem::path& path);

/// Order-independent SHA-256 over the header fields and per-record hashes
/// (labels plus pixel bytes or path), sorted before combining.
[[nodiscard]] std::string manifest_digest(const DatasetManifest& manifest);

}  // namespace uniat::data
