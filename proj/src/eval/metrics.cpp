// SPDX-License-Identifier: Apache-2.0

#include "uniat/eval/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "uniat/core/error.hpp"
#include "uniat/core/io.hpp"

namespace uniat::eval {

namespace {

struct QueryScore {
    std::size_t first_hit = 0;  // 1-based rank of the first positive
    double ap = 0;
};

double cosine_distance(std::span<const float> q, std::span<const float> g) {
    double dot = 0;
    for (std::size_t k = 0; k < q.size(); ++k) dot += double(q[k]) * double(g[k]);
    return 1.0 - dot;
}

void check_sizes(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                 const RelevanceMatrix& rel) {
    if (dim == 0 || query.size() != rel.num_queries * dim || gallery.size() != rel.num_gallery * dim ||
        rel.labels.size() != rel.num_queries * rel.num_gallery) {
        throw ShapeError("ranking: feature sizes do not match the relevance matrix");
    }
}

QueryScore score_query(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                       const RelevanceMatrix& rel, std::size_t q) {
    std::vector<std::pair<double, std::size_t>> kept;
    for (std::size_t g = 0; g < rel.num_gallery; ++g) {
        const Relevance r = rel.at(q, g);
        if (r == Relevance::junk || r == Relevance::excluded) continue;
        kept.emplace_back(cosine_distance(query.subspan(q * dim, dim), gallery.subspan(g * dim, dim)), g);
    }
    std::sort(kept.begin(), kept.end());
    QueryScore s;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < kept.size(); ++rank) {
        if (rel.at(q, kept[rank].second) != Relevance::positive) continue;
        ++hits;
        if (hits == 1) s.first_hit = rank + 1;
        s.ap += double(hits) / double(rank + 1);
    }
    if (hits == 0) throw ValidationError("ranking: query " + std::to_string(q) + " has no positive");
    s.ap /= double(hits);
    return s;
}

ScenarioMetrics& field_sum(ScenarioMetrics& acc, const ScenarioMetrics& m) {
    acc.rank1 += m.rank1;
    acc.rank5 += m.rank5;
    acc.rank10 += m.rank10;
    acc.map += m.map;
    acc.num_queries += m.num_queries;
    acc.dropped_queries += m.dropped_queries;
    return acc;
}

nlohmann::json metrics_json(const ScenarioMetrics& m) {
    return {{"rank1", m.rank1},
            {"rank5", m.rank5},
            {"rank10", m.rank10},
            {"mAP", m.map},
            {"num_queries", m.num_queries},
            {"dropped_queries", m.dropped_queries}};
}

ScenarioMetrics metrics_from_json(const nlohmann::json& j) {
    ScenarioMetrics m;
    m.rank1 = j.at("rank1").get<double>();
    m.rank5 = j.at("rank5").get<double>();
    m.rank10 = j.at("rank10").get<double>();
    m.map = j.at("mAP").get<double>();
    m.num_queries = j.value("num_queries", std::size_t{0});
    m.dropped_queries = j.value("dropped_queries", std::size_t{0});
    return m;
}

}  // namespace

std::size_t env_workers() {
    const char* v = std::getenv("UNIAT_NUM_WORKERS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) return 1;
    return static_cast<std::size_t>(n);
}

ScenarioMetrics rank_and_score(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                               const RelevanceMatrix& rel, std::size_t workers) {
    check_sizes(query, gallery, dim, rel);
    const std::size_t nq = rel.num_queries;
    std::vector<QueryScore> scores(nq);
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(nq, 1));
    if (workers == 1) {
        for (std::size_t q = 0; q < nq; ++q) scores[q] = score_query(query, gallery, dim, rel, q);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t q = w; q < nq; q += workers) scores[q] = score_query(query, gallery, dim, rel, q);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    ScenarioMetrics m;
    m.num_queries = nq;
    if (nq == 0) return m;
    for (const auto& s : scores) {
        m.rank1 += s.first_hit <= 1;
        m.rank5 += s.first_hit <= 5;
        m.rank10 += s.first_hit <= 10;
        m.map += s.ap;
    }
    const double scale = 100.0 / double(nq);
    m.rank1 *= scale;
    m.rank5 *= scale;
    m.rank10 *= scale;
    m.map *= scale;
    return m;
}

double oracle_map(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                  const RelevanceMatrix& rel) {
    check_sizes(query, gallery, dim, rel);
    auto kept = [&](std::size_t q, std::size_t g) {
        const Relevance r = rel.at(q, g);
        return r == Relevance::positive || r == Relevance::negative;
    };
    auto dist = [&](std::size_t q, std::size_t g) {
        double dot = 0;
        for (std::size_t k = 0; k < dim; ++k) dot += double(query[q * dim + k]) * double(gallery[g * dim + k]);
        return 1.0 - dot;
    };
    double total = 0;
    for (std::size_t q = 0; q < rel.num_queries; ++q) {
        double ap = 0;
        std::size_t npos = 0;
        for (std::size_t g = 0; g < rel.num_gallery; ++g) {
            if (rel.at(q, g) != Relevance::positive) continue;
            ++npos;
            const double dg = dist(q, g);
            std::size_t at_or_before = 0, positives_at_or_before = 0;
            for (std::size_t h = 0; h < rel.num_gallery; ++h) {
                if (!kept(q, h)) continue;
                const double dh = dist(q, h);
                if (dh < dg || (dh == dg && h <= g)) {
                    ++at_or_before;
                    positives_at_or_before += rel.at(q, h) == Relevance::positive;
                }
            }
            ap += double(positives_at_or_before) / double(at_or_before);
        }
        if (npos == 0) throw ValidationError("oracle: query without positives");
        total += ap / double(npos);
    }
    return rel.num_queries ? 100.0 * total / double(rel.num_queries) : 0.0;
}

double oracle_cmc(std::span<const float> query, std::span<const float> gallery, std::size_t dim,
                  const RelevanceMatrix& rel, std::size_t k) {
    check_sizes(query, gallery, dim, rel);
    std::size_t hits = 0;
    for (std::size_t q = 0; q < rel.num_queries; ++q) {
        std::size_t best = rel.num_gallery + 1;
        for (std::size_t g = 0; g < rel.num_gallery; ++g) {
            if (rel.at(q, g) != Relevance::positive) continue;
            const double dg = cosine_distance(query.subspan(q * dim, dim), gallery.subspan(g * dim, dim));
            std::size_t ahead = 0;
            for (std::size_t h = 0; h < rel.num_gallery; ++h) {
                const Relevance r = rel.at(q, h);
                if (r != Relevance::positive && r != Relevance::negative) continue;
                const double dh = cosine_distance(query.subspan(q * dim, dim), gallery.subspan(h * dim, dim));
                ahead += dh < dg || (dh == dg && h < g);
            }
            best = std::min(best, ahead + 1);
        }
        hits += best <= k;
    }
    return rel.num_queries ? 100.0 * double(hits) / double(rel.num_queries) : 0.0;
}

ScenarioMetrics any_time(std::span<const ScenarioResult> results) {
    std::array<int, kNumScenarios> seen{};
    for (const auto& r : results) ++seen[r.scenario.index()];
    for (Scenario s : kAllScenarios) {
        if (seen[s.index()] != 1) {
            throw ValidationError("any_time: scenario " + to_string(s) +
                                  (seen[s.index()] == 0 ? " is missing" : " is repeated"));
        }
    }
    ScenarioMetrics acc;
    for (const auto& r : results) field_sum(acc, r.metrics);
    acc.rank1 /= kNumScenarios;
    acc.rank5 /= kNumScenarios;
    acc.rank10 /= kNumScenarios;
    acc.map /= kNumScenarios;
    return acc;
}

void finalize(MetricsReport& report) {
    report.any_time.reset();
    if (report.scenarios.size() != kNumScenarios) return;
    try {
        report.any_time = any_time(report.scenarios);
    } catch (const ValidationError&) {
    }
}

std::string to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["scenarios"] = nlohmann::json::array();
    for (const auto& r : report.scenarios) {
        auto m = metrics_json(r.metrics);
        m["scenario"] = to_string(r.scenario);
        j["scenarios"].push_back(m);
    }
    if (report.any_time) j["any_time"] = metrics_json(*report.any_time);
    return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("metrics report: ") + e.what());
    }
    MetricsReport r;
    try {
        for (const auto& s : j.at("scenarios")) {
            const auto name = s.at("scenario").get<std::string>();
            const auto scenario = parse_scenario(name);
            if (!scenario) throw ValidationError("metrics report: unknown scenario '" + name + "'");
            r.scenarios.push_back({*scenario, metrics_from_json(s)});
        }
        if (j.contains("any_time")) r.any_time = metrics_from_json(j.at("any_time"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("metrics report: ") + e.what());
    }
    return r;
}

std::string to_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "scenario,rank1,rank5,rank10,mAP,num_queries,dropped_queries\n";
    auto row = [&](const std::string& name, const ScenarioMetrics& m) {
        os << name << ',' << m.rank1 << ',' << m.rank5 << ',' << m.rank10 << ',' << m.map << ',' << m.num_queries
           << ',' << m.dropped_queries << '\n';
    };
    for (const auto& r : report.scenarios) row(to_string(r.scenario), r.metrics);
    if (report.any_time) row("Any-Time", *report.any_time);
    return os.str();
}

std::string to_table(const MetricsReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(10) << "scenario" << std::right << std::setw(9) << "R1" << std::setw(9) << "R5"
       << std::setw(9) << "R10" << std::setw(9) << "mAP" << std::setw(9) << "queries" << '\n';
    auto row = [&](const std::string& name, const ScenarioMetrics& m) {
        os << std::left << std::setw(10) << name << std::right << std::setw(9) << m.rank1 << std::setw(9) << m.rank5
           << std::setw(9) << m.rank10 << std::setw(9) << m.map << std::setw(9) << m.num_queries << '\n';
    };
    for (const auto& r : report.scenarios) row(to_string(r.scenario), r.metrics);
    if (report.any_time) row("Any-Time", *report.any_time);
    return os.str();
}

void write_feature_dump(const std::filesystem::path& path, std::span<const float> features, std::size_t rows,
                        std::size_t cols, std::span<const std::string> sample_ids) {
    if (features.size() != rows * cols || sample_ids.size() != rows)
        throw ShapeError("feature dump: sizes do not match rows x cols");
    static_assert(std::endian::native == std::endian::little, "feature dumps are little-endian float32");
    atomic_write(path, std::as_bytes(features));
    std::ostringstream os;
    os << "rows " << rows << "\ncols " << cols << "\ndtype float32le\n";
    for (const auto& id : sample_ids) os << id << '\n';
    atomic_write(path.string() + ".txt", os.str());
}

}  // namespace uniat::eval
