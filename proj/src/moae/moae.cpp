// SPDX-License-Identifier: Apache-2.0

#include "uniat/moae/moae.hpp"

#include "uniat/core/error.hpp"
#include "uniat/tensor/ops.hpp"

namespace uniat::moae {

using tensor::Tape;
using tensor::Tensor;

std::string_view to_string(AttributeKind kind) noexcept {
    switch (kind) {
        case AttributeKind::DT: return "DT";
        case AttributeKind::NT: return "NT";
        case AttributeKind::AD: return "AD";
        case AttributeKind::ST: return "ST";
        case AttributeKind::LT: return "LT";
    }
    return "?";
}

AttributeKind kind_of(TimeMoment tm) noexcept { return static_cast<AttributeKind>(static_cast<int>(tm)); }

AttributeKind kind_of(TimeInterval ti) noexcept { return static_cast<AttributeKind>(3 + static_cast<int>(ti)); }

void MoaeConfig::validate() const {
    if (dim == 0 || hidden == 0) throw ValidationError("moae: dim and hidden must be positive");
    if (experts_per_scenario == 0) throw ValidationError("moae: experts_per_scenario must be positive");
    if (top_k < 1 || top_k > experts_per_scenario)
        throw ValidationError("moae: top_k must lie in [1, experts_per_scenario]");
}

ParamCount param_count(const MoaeConfig& c) {
    const std::size_t d = c.dim, h = c.hidden, n = c.experts_per_scenario;
    const std::size_t inner = d * h + h;
    const std::size_t outer = h * d + d;
    const std::size_t inner_kinds = c.order == AttributeOrder::moment_inner ? 3 : 2;
    const std::size_t outer_kinds = kNumAttributeKinds - inner_kinds;
    ParamCount out;
    out.shared_experts = n * (inner_kinds * inner + outer_kinds * outer);
    out.unshared_experts = kNumScenarios * n * (inner + outer);
    out.gating = kNumScenarios * n * d;
    return out;
}

namespace {

bool is_inner(AttributeKind kind, AttributeOrder order) {
    return is_time_moment(kind) == (order == AttributeOrder::moment_inner);
}

template <typename T>
Tensor<T> truncated(Rng& rng, tensor::Shape shape, double std) {
    std::vector<T> v(tensor::shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.truncated_normal(std));
    return Tensor<T>(std::move(shape), std::move(v), true);
}

}  // namespace

template <typename T>
MoaeLayer<T>::MoaeLayer(const MoaeConfig& config, Rng& rng, double init_std) : config_(config) {
    config_.validate();
    const std::size_t d = config_.dim, h = config_.hidden, n = config_.experts_per_scenario;
    layers_.reserve(kNumAttributeKinds * n);
    for (std::size_t k = 0; k < kNumAttributeKinds; ++k) {
        const auto kind = static_cast<AttributeKind>(k);
        const bool inner = is_inner(kind, config_.order);
        for (std::size_t j = 0; j < n; ++j) {
            AttributeLayer<T> layer;
            layer.kind = kind;
            layer.instance = j;
            layer.weight = inner ? truncated<T>(rng, {d, h}, init_std) : truncated<T>(rng, {h, d}, init_std);
            layer.bias = Tensor<T>::zeros({inner ? h : d}, true);
            layers_.push_back(std::move(layer));
        }
    }
    for (auto& g : gates_) g = truncated<T>(rng, {d, n}, init_std);
}

template <typename T>
std::size_t MoaeLayer<T>::layer_index(AttributeKind kind, std::size_t instance) const {
    if (instance >= config_.experts_per_scenario)
        throw ValidationError("moae: attribute instance " + std::to_string(instance) + " out of range");
    return static_cast<std::size_t>(kind) * config_.experts_per_scenario + instance;
}

template <typename T>
ExpertRef MoaeLayer<T>::expert(Scenario s, std::size_t j) const {
    if (j >= config_.experts_per_scenario) {
        throw ValidationError("moae: unknown expert (" + to_string(s) + ", " + std::to_string(j) + ")");
    }
    const AttributeKind tm = kind_of(s.tm), ti = kind_of(s.ti);
    const bool moment_inner = config_.order == AttributeOrder::moment_inner;
    return ExpertRef{layer_index(moment_inner ? tm : ti, j), layer_index(moment_inner ? ti : tm, j)};
}

template <typename T>
Tensor<T> MoaeLayer<T>::expert_forward(Tape<T>& tape, const Tensor<T>& t, Scenario s, std::size_t j) const {
    const ExpertRef e = expert(s, j);
    const auto& inner = layers_[e.inner];
    const auto& outer = layers_[e.outer];
    auto hidden = tensor::gelu(tape, tensor::linear(tape, t, inner.weight, inner.bias));
    return tensor::linear(tape, hidden, outer.weight, outer.bias);
}

template <typename T>
Tensor<T> MoaeLayer<T>::gate(Tape<T>& tape, const Tensor<T>& t, Scenario s) const {
    auto probs = tensor::softmax(tape, tensor::matmul(tape, t, gates_[s.index()]), 1);
    return tensor::topk_mask(tape, probs, config_.top_k);
}

template <typename T>
Tensor<T> MoaeLayer<T>::forward(Tape<T>& tape, const Tensor<T>& t, Scenario s, MoaeStats* stats) const {
    const std::size_t m = t.rows(), n = config_.experts_per_scenario;
    auto g = gate(tape, t, s);
    auto gv = g.values();
    Tensor<T> y;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < m; ++i)
            if (gv[i * n + j] != T(0)) rows.push_back(i);
        if (rows.empty()) continue;
        if (stats) stats->expert_evaluations += rows.size();
        auto expert_out = expert_forward(tape, tensor::gather_rows(tape, t, rows), s, j);
        std::vector<std::size_t> col(rows.size(), j);
        auto weight = tensor::pick(tape, tensor::gather_rows(tape, g, rows), col);
        auto placed = tensor::scatter_rows(tape, tensor::scale_rows(tape, expert_out, weight), rows, m);
        y = y.defined() ? tensor::add(tape, y, placed) : placed;
    }
    if (stats) {
        stats->tokens += m;
        stats->tokens_per_scenario[s.index()] += m;
    }
    if (!y.defined()) y = Tensor<T>::zeros({m, config_.dim});
    return y;
}

template <typename T>
void MoaeLayer<T>::collect_parameters(const std::string& prefix, std::vector<tensor::NamedTensor<T>>& out) const {
    for (const auto& layer : layers_) {
        const std::string base = prefix + "attr." + std::string(to_string(layer.kind)) + "." +
                                 std::to_string(layer.instance) + ".";
        out.push_back({base + "weight", layer.weight});
        out.push_back({base + "bias", layer.bias});
    }
    for (Scenario s : kAllScenarios) out.push_back({prefix + "gate." + to_string(s), gates_[s.index()]});
}

template class MoaeLayer<float>;
template class MoaeLayer<double>;

}  // namespace uniat::moae
