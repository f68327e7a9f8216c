// SPDX-License-Identifier: Apache-2.0

#include "uniat/core/scenario.hpp"

#include <algorithm>

#include "uniat/core/error.hpp"

namespace uniat {

std::string_view to_string(TimeMoment tm) noexcept {
    switch (tm) {
        case TimeMoment::DT: return "DT";
        case TimeMoment::NT: return "NT";
        case TimeMoment::AD: return "AD";
    }
    return "?";
}

std::string_view to_string(TimeInterval ti) noexcept {
    return ti == TimeInterval::ST ? "ST" : "LT";
}

std::string_view to_string(Modality m) noexcept {
    return m == Modality::RGB ? "RGB" : "IR";
}

std::string to_string(Scenario s) {
    std::string out(to_string(s.tm));
    out += '-';
    out += to_string(s.ti);
    return out;
}

std::optional<Scenario> parse_scenario(std::string_view text) {
    for (Scenario s : kAllScenarios) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

std::optional<Modality> parse_modality(std::string_view text) {
    if (text == "RGB") return Modality::RGB;
    if (text == "IR") return Modality::IR;
    return std::nullopt;
}

std::vector<Scenario> parse_scenario_list(std::string_view text) {
    std::vector<Scenario> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string_view::npos) comma = text.size();
        std::string_view item = text.substr(pos, comma - pos);
        auto s = parse_scenario(item);
        if (!s) throw UsageError("unknown scenario '" + std::string(item) + "'");
        if (std::find(out.begin(), out.end(), *s) != out.end())
            throw UsageError("duplicate scenario '" + std::string(item) + "'");
        out.push_back(*s);
        pos = comma + 1;
    }
    return out;
}

}  // namespace uniat
