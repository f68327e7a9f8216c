// SPDX-License-Identifier: Apache-2.0

#include "uniat/objective/labels.hpp"

#include <string>

#include "uniat/core/error.hpp"

namespace uniat::objective {

std::size_t LabelRegistry::add(std::int64_t person, std::int64_t clothes) {
    auto [pit, new_person] = person_.try_emplace(person, person_raw_.size());
    if (new_person) {
        person_raw_.push_back(person);
        wardrobe_.emplace_back();
    }
    auto [cit, new_clothes] = clothes_.try_emplace({person, clothes}, owner_.size());
    if (new_clothes) {
        owner_.push_back(pit->second);
        wardrobe_[pit->second].push_back(cit->second);
    }
    return cit->second;
}

std::size_t LabelRegistry::person_index(std::int64_t person) const {
    auto it = person_.find(person);
    if (it == person_.end()) throw ValidationError("unknown label: person " + std::to_string(person));
    return it->second;
}

std::size_t LabelRegistry::clothes_index(std::int64_t person, std::int64_t clothes) const {
    auto it = clothes_.find({person, clothes});
    if (it == clothes_.end()) {
        throw ValidationError("unknown label: clothes " + std::to_string(clothes) + " of person " +
                              std::to_string(person));
    }
    return it->second;
}

std::size_t LabelRegistry::owner(std::size_t clothes) const {
    if (clothes >= owner_.size()) throw ValidationError("unknown label: clothes index " + std::to_string(clothes));
    return owner_[clothes];
}

const std::vector<std::size_t>& LabelRegistry::clothes_of(std::size_t person) const {
    if (person >= wardrobe_.size()) throw ValidationError("unknown label: person index " + std::to_string(person));
    return wardrobe_[person];
}

NegativeSet build_negative_set(Scenario s, std::size_t gt_person, std::size_t gt_clothes,
                               const LabelRegistry& registry) {
    if (gt_person >= registry.num_persons())
        throw ValidationError("unknown label: person index " + std::to_string(gt_person));
    NegativeSet out{s, 0, {}};
    if (s.ti == TimeInterval::ST) {
        const std::size_t owner = registry.owner(gt_clothes);
        if (owner != gt_person) {
            throw ValidationError("clothes index " + std::to_string(gt_clothes) + " is not owned by person index " +
                                  std::to_string(gt_person));
        }
        out.gt_category = gt_clothes;
        for (std::size_t c = 0; c < registry.num_clothes(); ++c)
            if (registry.owner(c) != owner) out.members.push_back(c);
    } else {
        out.gt_category = gt_person;
        for (std::size_t p = 0; p < registry.num_persons(); ++p)
            if (p != gt_person) out.members.push_back(p);
    }
    return out;
}

bool supervises(Modality modality, Scenario s) noexcept {
    if (s.tm == TimeMoment::AD) return true;
    return (modality == Modality::RGB) == (s.tm == TimeMoment::DT);
}

std::vector<Scenario> modality_mask(Modality modality) {
    std::vector<Scenario> out;
    for (Scenario s : kAllScenarios)
        if (supervises(modality, s)) out.push_back(s);
    return out;
}

}  // namespace uniat::objective
