// SPDX-License-Identifier: Apache-2.0
//
// Dense label spaces for the classifier heads and the negative sets that
// restrict each scenario's softmax.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "uniat/core/scenario.hpp"

namespace uniat::objective {

/// Maps raw person IDs and person-scoped clothes IDs onto dense indices in
/// first-registration order. A clothes index always belongs to one person.
class LabelRegistry {
public:
    /// Registers (person, clothes) and returns the dense clothes index.
    std::size_t add(std::int64_t person, std::int64_t clothes);

    [[nodiscard]] std::size_t num_persons() const noexcept { return person_raw_.size(); }
    [[nodiscard]] std::size_t num_clothes() const noexcept { return owner_.size(); }

    /// Throw ValidationError("unknown label ...") for unregistered IDs.
    [[nodiscard]] std::size_t person_index(std::int64_t person) const;
    [[nodiscard]] std::size_t clothes_index(std::int64_t person, std::int64_t clothes) const;

    /// Dense person index owning a dense clothes index.
    [[nodiscard]] std::size_t owner(std::size_t clothes) const;
    [[nodiscard]] const std::vector<std::size_t>& clothes_of(std::size_t person) const;

    [[nodiscard]] std::int64_t raw_person(std::size_t person) const { return person_raw_.at(person); }

private:
    std::map<std::int64_t, std::size_t> person_;
    std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> clothes_;
    std::vector<std::int64_t> person_raw_;
    std::vector<std::size_t> owner_;
    std::vector<std::vector<std::size_t>> wardrobe_;
};

struct NegativeSet {
    Scenario scenario;
    std::size_t gt_category = 0;
    std::vector<std::size_t> members;  // ascending
};

/// ST: clothes indices owned by a different person than gt_clothes.
/// LT: every person index except gt_person.
/// gt_person and gt_clothes are dense; unknown indices throw ValidationError.
[[nodiscard]] NegativeSet build_negative_set(Scenario s, std::size_t gt_person, std::size_t gt_clothes,
                                             const LabelRegistry& registry);

/// Scenarios whose tokens are supervised for a sample of this modality.
[[nodiscard]] std::vector<Scenario> modality_mask(Modality modality);
[[nodiscard]] bool supervises(Modality modality, Scenario s) noexcept;

}  // namespace uniat::objective
