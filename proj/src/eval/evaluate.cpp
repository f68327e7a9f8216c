// SPDX-License-Identifier: Apache-2.0

#include "uniat/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <set>
#include <thread>

#include "uniat/core/error.hpp"

namespace uniat::eval {

void l2_normalize_rows(std::span<float> rows, std::size_t dim) {
    if (dim == 0 || rows.size() % dim != 0) throw ShapeError("normalize: row width does not divide the data");
    for (std::size_t r = 0; r < rows.size() / dim; ++r) {
        auto row = rows.subspan(r * dim, dim);
        double sq = 0;
        for (float v : row) sq += double(v) * double(v);
        const double norm = std::sqrt(sq);
        if (norm > 0)
            for (float& v : row) v = static_cast<float>(double(v) / norm);
    }
}

template <typename T>
std::array<std::vector<float>, kNumScenarios> extract_all_features(const objective::Model<T>& model,
                                                                   const data::DatasetManifest& manifest,
                                                                   std::span<const std::size_t> records,
                                                                   std::size_t workers) {
    const std::size_t d = model.backbone.config.embed_dim;
    const std::size_t n = records.size();
    for (std::size_t i : records) {
        if (i >= manifest.records.size()) throw ValidationError("feature extraction: record index out of range");
        if (manifest.records[i].image.empty())
            throw ValidationError("feature extraction: record " + std::to_string(i) + " has no inline pixels");
    }
    std::array<std::vector<float>, kNumScenarios> out;
    for (auto& o : out) o.assign(n * d, 0.0f);
    const std::size_t batches = (n + kFeatureBatch - 1) / kFeatureBatch;

    auto run = [&](std::size_t b) {
        const std::size_t lo = b * kFeatureBatch, hi = std::min(n, lo + kFeatureBatch);
        std::vector<Image> images;
        images.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) images.push_back(manifest.records[records[i]].image);
        auto feats = objective::retrieval_features(model, std::span<const Image>(images));
        for (std::size_t s = 0; s < kNumScenarios; ++s)
            std::copy(feats[s].begin(), feats[s].end(), out[s].begin() + static_cast<std::ptrdiff_t>(lo * d));
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(batches, 1));
    if (workers == 1) {
        for (std::size_t b = 0; b < batches; ++b) run(b);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t b = w; b < batches; b += workers) run(b);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    for (auto& o : out) l2_normalize_rows(o, d);
    return out;
}

template <typename T>
std::vector<float> extract_features(const objective::Model<T>& model, const data::DatasetManifest& manifest,
                                    std::span<const std::size_t> records, Scenario scenario, std::size_t workers) {
    return std::move(extract_all_features(model, manifest, records, workers)[scenario.index()]);
}

template <typename T>
MetricsReport evaluate(const objective::Model<T>& model, const data::DatasetManifest& manifest,
                       std::span<const Scenario> scenarios, const ProtocolFlags& flags, std::size_t workers) {
    std::vector<ScenarioProtocol> protocols;
    std::set<std::size_t> needed;
    for (Scenario s : scenarios) {
        protocols.push_back(build_protocol(s, manifest, flags));
        needed.insert(protocols.back().query_records.begin(), protocols.back().query_records.end());
        needed.insert(protocols.back().gallery_records.begin(), protocols.back().gallery_records.end());
    }
    const std::vector<std::size_t> records(needed.begin(), needed.end());
    std::map<std::size_t, std::size_t> row_of;
    for (std::size_t i = 0; i < records.size(); ++i) row_of[records[i]] = i;
    const auto features = extract_all_features(model, manifest, records, workers);
    const std::size_t d = model.backbone.config.embed_dim;

    MetricsReport report;
    for (const auto& p : protocols) {
        const auto& f = features[p.scenario.index()];
        auto gather = [&](const std::vector<std::size_t>& recs) {
            std::vector<float> out;
            out.reserve(recs.size() * d);
            for (std::size_t r : recs) {
                const auto at = f.begin() + static_cast<std::ptrdiff_t>(row_of.at(r) * d);
                out.insert(out.end(), at, at + static_cast<std::ptrdiff_t>(d));
            }
            return out;
        };
        const auto q = gather(p.query_records), g = gather(p.gallery_records);
        auto m = rank_and_score(q, g, d, p.relevance(), workers);
        m.dropped_queries = p.dropped_queries;
        report.scenarios.push_back({p.scenario, m});
    }
    finalize(report);
    return report;
}

#define UNIAT_INSTANTIATE_EVAL(T)                                                                                \
    template std::array<std::vector<float>, kNumScenarios> extract_all_features<T>(                            \
        const objective::Model<T>&, const data::DatasetManifest&, std::span<const std::size_t>, std::size_t);  \
    template std::vector<float> extract_features<T>(const objective::Model<T>&, const data::DatasetManifest&,  \
                                                    std::span<const std::size_t>, Scenario, std::size_t);      \
    template MetricsReport evaluate<T>(const objective::Model<T>&, const data::DatasetManifest&,               \
                                       std::span<const Scenario>, const ProtocolFlags&, std::size_t);

UNIAT_INSTANTIATE_EVAL(float)
UNIAT_INSTANTIATE_EVAL(double)

#undef UNIAT_INSTANTIATE_EVAL

}  // namespace uniat::eval
