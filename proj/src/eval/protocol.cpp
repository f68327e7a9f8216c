// SPDX-License-Identifier: Apache-2.0

#include "uniat/eval/protocol.hpp"

#include <string>

#include "uniat/core/error.hpp"

namespace uniat::eval {

namespace {

bool query_modality_ok(Scenario s, Modality m) {
    switch (s.tm) {
        case TimeMoment::DT: return m == Modality::RGB;
        case TimeMoment::NT: return m == Modality::IR;
        case TimeMoment::AD: return true;
    }
    return false;
}

bool gallery_modality_ok(Scenario s, Modality query, Modality gallery) {
    return s.tm == TimeMoment::AD ? gallery != query : gallery == query;
}

}  // namespace

Relevance classify(Scenario s, const ProtocolFlags& flags, const ItemMeta& q, const ItemMeta& g) noexcept {
    if (!gallery_modality_ok(s, q.modality, g.modality)) return Relevance::excluded;
    if (q.person != g.person) return Relevance::negative;
    const bool same_clothes = q.clothes == g.clothes;
    const bool same_camera = q.camera == g.camera;
    if (s.ti == TimeInterval::ST) {
        if (!same_clothes || same_camera) return Relevance::junk;
        return Relevance::positive;
    }
    if (same_clothes) return Relevance::junk;
    if (flags.lt_exclude_same_camera && same_camera) return Relevance::junk;
    return Relevance::positive;
}

RelevanceMatrix ScenarioProtocol::relevance() const {
    RelevanceMatrix m{queries.size(), gallery.size(), {}};
    m.labels.reserve(queries.size() * gallery.size());
    for (const auto& q : queries)
        for (const auto& g : gallery) m.labels.push_back(classify(scenario, flags, q, g));
    return m;
}

ScenarioProtocol build_protocol(Scenario s, const data::DatasetManifest& manifest, const ProtocolFlags& flags) {
    ScenarioProtocol p;
    p.scenario = s;
    p.flags = flags;
    auto meta = [&](std::size_t i) {
        const auto& r = manifest.records[i];
        return ItemMeta{r.person_id, r.clothes_id, r.camera_id, r.modality};
    };
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (r.split == data::Split::gallery && query_modality_ok(s, r.modality)) {
            p.gallery_records.push_back(i);
            p.gallery.push_back(meta(i));
        }
        if (r.split == data::Split::query && query_modality_ok(s, r.modality)) candidates.push_back(i);
    }
    const std::string name = to_string(s);
    if (candidates.empty()) throw ValidationError("scenario " + name + " infeasible: no eligible query images");
    if (p.gallery.empty()) throw ValidationError("scenario " + name + " infeasible: no eligible gallery images");
    for (std::size_t i : candidates) {
        const ItemMeta q = meta(i);
        bool has_positive = false;
        for (const auto& g : p.gallery) {
            if (classify(s, flags, q, g) == Relevance::positive) {
                has_positive = true;
                break;
            }
        }
        if (!has_positive) {
            ++p.dropped_queries;
            continue;
        }
        p.query_records.push_back(i);
        p.queries.push_back(q);
    }
    if (p.queries.empty()) throw ValidationError("scenario " + name + " infeasible: no query has a positive");
    return p;
}

}  // namespace uniat::eval
