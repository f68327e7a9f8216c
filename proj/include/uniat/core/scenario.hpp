// SPDX-License-Identifier: Apache-2.0
//
// Retrieval scenarios: the cross product of time moment {DT, NT, AD} and
// time interval {ST, LT}, plus capture modality.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uniat {

enum class TimeMoment : std::uint8_t { DT = 0, NT = 1, AD = 2 };
enum class TimeInterval : std::uint8_t { ST = 0, LT = 1 };
enum class Modality : std::uint8_t { RGB = 0, IR = 1 };

inline constexpr std::size_t kNumScenarios = 6;
inline constexpr std::size_t kNumTimeMoments = 3;
inline constexpr std::size_t kNumTimeIntervals = 2;

struct Scenario {
    TimeMoment tm = TimeMoment::DT;
    TimeInterval ti = TimeInterval::ST;

    /// Dense index in evaluation order DT-ST, DT-LT, NT-ST, NT-LT, AD-ST, AD-LT.
    [[nodiscard]] constexpr std::size_t index() const noexcept {
        return static_cast<std::size_t>(tm) * kNumTimeIntervals + static_cast<std::size_t>(ti);
    }

    [[nodiscard]] static constexpr Scenario from_index(std::size_t i) noexcept {
        return Scenario{static_cast<TimeMoment>(i / kNumTimeIntervals),
                        static_cast<TimeInterval>(i % kNumTimeIntervals)};
    }

    friend constexpr bool operator==(Scenario, Scenario) = default;
};

inline constexpr std::array<Scenario, kNumScenarios> kAllScenarios = {
    Scenario{TimeMoment::DT, TimeInterval::ST}, Scenario{TimeMoment::DT, TimeInterval::LT},
    Scenario{TimeMoment::NT, TimeInterval::ST}, Scenario{TimeMoment::NT, TimeInterval::LT},
    Scenario{TimeMoment::AD, TimeInterval::ST}, Scenario{TimeMoment::AD, TimeInterval::LT},
};

[[nodiscard]] std::string_view to_string(TimeMoment tm) noexcept;
[[nodiscard]] std::string_view to_string(TimeInterval ti) noexcept;
[[nodiscard]] std::string_view to_string(Modality m) noexcept;
[[nodiscard]] std::string to_string(Scenario s);

[[nodiscard]] std::optional<Scenario> parse_scenario(std::string_view text);
[[nodiscard]] std::optional<Modality> parse_modality(std::string_view text);

/// Parses a comma-separated list such as "DT-ST,AD-LT". Throws UsageError on
/// unknown names or duplicates.
[[nodiscard]] std::vector<Scenario> parse_scenario_list(std::string_view text);

}  // namespace uniat
