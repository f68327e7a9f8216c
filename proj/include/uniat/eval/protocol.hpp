// SPDX-License-Identifier: Apache-2.0
//
// Six-scenario retrieval protocols.
//   Modality:  DT query and gallery RGB; NT both IR; AD gallery of the
//              opposite modality, queries of both modalities pooled.
//   ST:        positive = same person, same clothes; junk = same person with
//              other clothes, or the query's own (person, clothes, camera).
//   LT:        positive = same person, other clothes; junk = same person,
//              same clothes (and, if lt_exclude_same_camera, same camera).
// Queries left without a positive are dropped and counted.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "uniat/core/scenario.hpp"
#include "uniat/data/manifest.hpp"

namespace uniat::eval {

struct ProtocolFlags {
    bool lt_exclude_same_camera = false;
};

struct ItemMeta {
    std::int64_t person = 0;
    std::int64_t clothes = 0;
    std::int64_t camera = 0;
    Modality modality = Modality::RGB;
};

/// How a gallery item counts for a query. `excluded` items are outside the
/// query's gallery (wrong modality) and behave exactly like junk.
enum class Relevance : std::uint8_t { negative, positive, junk, excluded };

[[nodiscard]] Relevance classify(Scenario s, const ProtocolFlags& flags, const ItemMeta& query,
                                 const ItemMeta& gallery) noexcept;

/// Dense [num_queries x num_gallery] relevance labels.
struct RelevanceMatrix {
    std::size_t num_queries = 0;
    std::size_t num_gallery = 0;
    std::vector<Relevance> labels;

    [[nodiscard]] Relevance at(std::size_t q, std::size_t g) const { return labels[q * num_gallery + g]; }
};

struct ScenarioProtocol {
    Scenario scenario;
    ProtocolFlags flags;
    std::vector<std::size_t> query_records;    // manifest indices
    std::vector<std::size_t> gallery_records;  // manifest indices, union over query modalities
    std::vector<ItemMeta> queries;
    std::vector<ItemMeta> gallery;
    std::size_t dropped_queries = 0;

    [[nodiscard]] RelevanceMatrix relevance() const;
};

/// Throws ValidationError("scenario X infeasible ...") when the manifest has no
/// eligible query or gallery image or every query lacks a positive.
[[nodiscard]] ScenarioProtocol build_protocol(Scenario s, const data::DatasetManifest& manifest,
                                              const ProtocolFlags& flags = {});

}  // namespace uniat::eval
