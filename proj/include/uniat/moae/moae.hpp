// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-Attribute-Experts. Each scenario owns n experts; expert j of
// scenario s is the composition outer(gelu(inner(t))) of two attribute layers,
// one keyed to s's time moment and one keyed to s's time interval. Attribute
// layers are stored once and referenced by every expert carrying their kind,
// so 5n layer instances back 6n experts.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uniat/core/rng.hpp"
#include "uniat/core/scenario.hpp"
#include "uniat/tensor/tensor.hpp"

namespace uniat::moae {

enum class AttributeKind : std::uint8_t { DT = 0, NT = 1, AD = 2, ST = 3, LT = 4 };
inline constexpr std::size_t kNumAttributeKinds = 5;

[[nodiscard]] std::string_view to_string(AttributeKind kind) noexcept;
[[nodiscard]] AttributeKind kind_of(TimeMoment tm) noexcept;
[[nodiscard]] AttributeKind kind_of(TimeInterval ti) noexcept;
[[nodiscard]] constexpr bool is_time_moment(AttributeKind k) noexcept { return static_cast<int>(k) < 3; }

/// Which attribute category forms the inner d->h projection.
enum class AttributeOrder : std::uint8_t {
    moment_inner,    // inner = time moment, outer = time interval
    interval_inner,  // inner = time interval, outer = time moment
};

struct MoaeConfig {
    std::size_t dim = 64;
    std::size_t hidden = 128;
    std::size_t experts_per_scenario = 2;
    std::size_t top_k = 1;
    AttributeOrder order = AttributeOrder::moment_inner;

    void validate() const;
};

/// Scalar counts for one MoAE layer. Expert counts exclude gating.
struct ParamCount {
    std::size_t shared_experts = 0;
    std::size_t unshared_experts = 0;
    std::size_t gating = 0;

    [[nodiscard]] std::size_t shared() const noexcept { return shared_experts + gating; }
    [[nodiscard]] std::size_t unshared() const noexcept { return unshared_experts + gating; }
};

[[nodiscard]] ParamCount param_count(const MoaeConfig& config);

/// Instrumentation for routing sparsity.
struct MoaeStats {
    std::uint64_t tokens = 0;
    std::uint64_t expert_evaluations = 0;
    std::array<std::uint64_t, kNumScenarios> tokens_per_scenario{};
};

template <typename T>
struct AttributeLayer {
    AttributeKind kind = AttributeKind::DT;
    std::size_t instance = 0;
    tensor::Tensor<T> weight;  // inner: [d x h], outer: [h x d]
    tensor::Tensor<T> bias;    // inner: [h], outer: [d]
};

struct ExpertRef {
    std::size_t inner = 0;  // index into attribute_layers()
    std::size_t outer = 0;
};

template <typename T>
class MoaeLayer {
public:
    MoaeLayer() = default;
    MoaeLayer(const MoaeConfig& config, Rng& rng, double init_std);

    [[nodiscard]] const MoaeConfig& config() const noexcept { return config_; }

    [[nodiscard]] std::vector<AttributeLayer<T>>& attribute_layers() noexcept { return layers_; }
    [[nodiscard]] const std::vector<AttributeLayer<T>>& attribute_layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t layer_index(AttributeKind kind, std::size_t instance) const;

    /// Gating weights of scenario s, stored transposed as [d x n] so that the
    /// gate logits of a token row t are t * W.
    [[nodiscard]] tensor::Tensor<T>& gate_weight(Scenario s) { return gates_[s.index()]; }
    [[nodiscard]] const tensor::Tensor<T>& gate_weight(Scenario s) const { return gates_[s.index()]; }

    /// Throws ValidationError for j >= n.
    [[nodiscard]] ExpertRef expert(Scenario s, std::size_t j) const;

    /// outer(gelu(inner(t))) for token rows t [m x d].
    tensor::Tensor<T> expert_forward(tensor::Tape<T>& tape, const tensor::Tensor<T>& t, Scenario s,
                                     std::size_t j) const;

    /// top_k(softmax(t * W_s)) per row; [m x n].
    tensor::Tensor<T> gate(tensor::Tape<T>& tape, const tensor::Tensor<T>& t, Scenario s) const;

    /// Gate-weighted sum of expert outputs. Only experts with a nonzero gate
    /// entry are evaluated, and only on the rows that selected them.
    tensor::Tensor<T> forward(tensor::Tape<T>& tape, const tensor::Tensor<T>& t, Scenario s,
                              MoaeStats* stats = nullptr) const;

    void collect_parameters(const std::string& prefix, std::vector<tensor::NamedTensor<T>>& out) const;

private:
    MoaeConfig config_;
    std::vector<AttributeLayer<T>> layers_;
    std::array<tensor::Tensor<T>, kNumScenarios> gates_;
};

extern template class MoaeLayer<float>;
extern template class MoaeLayer<double>;

}  // namespace uniat::moae
