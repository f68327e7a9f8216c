// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_support.hpp"
#include "uniat/core/error.hpp"
#include "uniat/moae/moae.hpp"
#include "uniat/tensor/grad_check.hpp"
#include "uniat/tensor/ops.hpp"

using namespace uniat;
using namespace uniat::moae;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using tensor::Tape;
using tensor::Tensor;
using uniat::testing::random_tensor;

namespace {

using D = Tensor<double>;
constexpr Scenario kDtSt{TimeMoment::DT, TimeInterval::ST};
constexpr Scenario kDtLt{TimeMoment::DT, TimeInterval::LT};

MoaeLayer<double> make_layer(std::size_t d, std::size_t h, std::size_t n, std::size_t k, std::uint64_t seed = 7,
                             double std = 0.5) {
    Rng rng(seed);
    return MoaeLayer<double>(MoaeConfig{d, h, n, k, AttributeOrder::moment_inner}, rng, std);
}

void randomize_biases(MoaeLayer<double>& layer, Rng& rng) {
    for (auto& a : layer.attribute_layers())
        for (double& b : a.bias.values()) b = rng.uniform(-0.3, 0.3);
}

double gelu_ref(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

// a1(gelu(a2(t))) with plain loops.
std::vector<double> expert_ref(const MoaeLayer<double>& layer, ExpertRef e, std::span<const double> t) {
    const auto& in = layer.attribute_layers()[e.inner];
    const auto& out = layer.attribute_layers()[e.outer];
    const std::size_t d = layer.config().dim, h = layer.config().hidden;
    std::vector<double> hidden(h), y(d);
    for (std::size_t c = 0; c < h; ++c) {
        double acc = in.bias[c];
        for (std::size_t r = 0; r < d; ++r) acc += t[r] * in.weight[r * h + c];
        hidden[c] = gelu_ref(acc);
    }
    for (std::size_t c = 0; c < d; ++c) {
        double acc = out.bias[c];
        for (std::size_t r = 0; r < h; ++r) acc += hidden[r] * out.weight[r * d + c];
        y[c] = acc;
    }
    return y;
}

std::vector<double> gate_ref(const MoaeLayer<double>& layer, Scenario s, std::span<const double> t) {
    const std::size_t d = layer.config().dim, n = layer.config().experts_per_scenario;
    const auto& w = layer.gate_weight(s);
    std::vector<double> logits(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < d; ++r) logits[j] += t[r] * w[r * n + j];
    double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (double& l : logits) l /= z;
    return logits;
}

}  // namespace

TEST_CASE("attribute layers are stored once per kind and instance", "[moae]") {
    auto layer = make_layer(4, 8, 2, 1);
    REQUIRE(layer.attribute_layers().size() == 10);
    for (Scenario s : kAllScenarios) {
        for (std::size_t j = 0; j < 2; ++j) {
            auto e = layer.expert(s, j);
            const auto& in = layer.attribute_layers()[e.inner];
            const auto& out = layer.attribute_layers()[e.outer];
            CHECK(in.kind == kind_of(s.tm));
            CHECK(out.kind == kind_of(s.ti));
            CHECK(in.instance == j);
            CHECK(out.instance == j);
            CHECK(in.weight.shape() == tensor::Shape{4, 8});
            CHECK(out.weight.shape() == tensor::Shape{8, 4});
        }
    }
    // DT-ST and DT-LT share the DT layer by reference.
    CHECK(layer.attribute_layers()[layer.expert(kDtSt, 1).inner].weight.same_storage(
        layer.attribute_layers()[layer.expert(kDtLt, 1).inner].weight));
    CHECK_THROWS_WITH(layer.expert(kDtSt, 2), ContainsSubstring("unknown expert"));
}

TEST_CASE("interval_inner order swaps the projections", "[moae]") {
    Rng rng(1);
    MoaeLayer<double> layer(MoaeConfig{4, 8, 1, 1, AttributeOrder::interval_inner}, rng, 0.1);
    auto e = layer.expert(kDtLt, 0);
    CHECK(layer.attribute_layers()[e.inner].kind == AttributeKind::LT);
    CHECK(layer.attribute_layers()[e.outer].kind == AttributeKind::DT);
    CHECK(layer.attribute_layers()[e.inner].weight.shape() == tensor::Shape{4, 8});
}

TEST_CASE("expert_forward examples", "[moae][expert]") {
    Rng rng(3);
    auto t = random_tensor(rng, {3, 4});

    SECTION("zero weights give zero output") {
        auto layer = make_layer(4, 8, 1, 1);
        for (auto& a : layer.attribute_layers()) {
            for (double& v : a.weight.values()) v = 0;
            for (double& v : a.bias.values()) v = 0;
        }
        Tape<double> tape;
        auto y = layer.expert_forward(tape, t, kDtSt, 0);
        for (double v : y.values()) CHECK(v == 0.0);
    }
    SECTION("identity projections collapse to gelu") {
        auto layer = make_layer(4, 4, 1, 1);
        for (auto& a : layer.attribute_layers())
            for (std::size_t i = 0; i < 16; ++i) a.weight[i] = (i % 5 == 0) ? 1.0 : 0.0;
        for (auto& a : layer.attribute_layers())
            for (double& v : a.bias.values()) v = 0;
        Tape<double> tape;
        auto y = layer.expert_forward(tape, t, kDtSt, 0);
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK_THAT(y[i], WithinAbs(gelu_ref(t[i]), 1e-15));
    }
    SECTION("random weights match a direct evaluation") {
        auto layer = make_layer(4, 8, 2, 1);
        randomize_biases(layer, rng);
        for (Scenario s : kAllScenarios) {
            for (std::size_t j = 0; j < 2; ++j) {
                Tape<double> tape;
                auto y = layer.expert_forward(tape, t, s, j);
                for (std::size_t r = 0; r < 3; ++r) {
                    auto ref = expert_ref(layer, layer.expert(s, j), t.values().subspan(r * 4, 4));
                    for (std::size_t c = 0; c < 4; ++c) CHECK_THAT(y[r * 4 + c], WithinAbs(ref[c], 1e-6));
                }
            }
        }
    }
}

TEST_CASE("gate examples", "[moae][gate]") {
    SECTION("logits [2, 1] keep only the softmax winner") {
        auto layer = make_layer(2, 4, 2, 1);
        auto& w = layer.gate_weight(kDtSt);
        std::vector<double> vals{2, 1, 0, 0};
        std::copy(vals.begin(), vals.end(), w.values().begin());
        Tape<double> tape;
        auto g = layer.gate(tape, D({1, 2}, {1, 0}), kDtSt);
        CHECK_THAT(g[0], WithinAbs(0.7310585786300049, 1e-4));
        CHECK(g[1] == 0.0);
    }
    SECTION("n = 1 is always one") {
        auto layer = make_layer(4, 4, 1, 1);
        Rng rng(5);
        Tape<double> tape;
        auto g = layer.gate(tape, random_tensor(rng, {5, 4}, 3.0), kDtLt);
        for (double v : g.values()) CHECK_THAT(v, WithinAbs(1.0, 1e-15));
    }
    SECTION("k = n is a plain softmax") {
        auto layer = make_layer(4, 4, 3, 3);
        Rng rng(6);
        Tape<double> tape;
        auto t = random_tensor(rng, {4, 4}, 2.0);
        auto g = layer.gate(tape, t, kDtLt);
        for (std::size_t r = 0; r < 4; ++r) {
            auto ref = gate_ref(layer, kDtLt, t.values().subspan(r * 4, 4));
            double total = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK_THAT(g[r * 3 + j], WithinAbs(ref[j], 1e-12));
                total += g[r * 3 + j];
            }
            CHECK_THAT(total, WithinAbs(1.0, 1e-12));
        }
    }
    SECTION("exactly k nonzeros") {
        auto layer = make_layer(4, 4, 4, 2);
        Rng rng(8);
        Tape<double> tape;
        auto g = layer.gate(tape, random_tensor(rng, {10, 4}, 2.0), kDtSt);
        for (std::size_t r = 0; r < 10; ++r) {
            int nz = 0;
            for (std::size_t j = 0; j < 4; ++j) nz += g[r * 4 + j] != 0.0;
            CHECK(nz == 2);
        }
    }
}

TEST_CASE("moae_forward examples", "[moae][forward]") {
    Rng rng(11);
    auto t = random_tensor(rng, {6, 4});

    SECTION("n = 1 equals the sole expert") {
        auto layer = make_layer(4, 8, 1, 1);
        randomize_biases(layer, rng);
        Tape<double> tape;
        auto y = layer.forward(tape, t, kDtLt);
        auto e = layer.expert_forward(tape, t, kDtLt, 0);
        for (std::size_t i = 0; i < y.numel(); ++i) CHECK_THAT(y[i], WithinAbs(e[i], 1e-15));
    }
    SECTION("k = 1 scales the selected expert by its softmax weight") {
        auto layer = make_layer(4, 8, 2, 1);
        randomize_biases(layer, rng);
        for (Scenario s : kAllScenarios) {
            Tape<double> tape;
            auto y = layer.forward(tape, t, s);
            for (std::size_t r = 0; r < 6; ++r) {
                auto row = t.values().subspan(r * 4, 4);
                auto p = gate_ref(layer, s, row);
                const std::size_t j = p[1] > p[0] ? 1 : 0;
                auto ref = expert_ref(layer, layer.expert(s, j), row);
                for (std::size_t c = 0; c < 4; ++c) CHECK_THAT(y[r * 4 + c], WithinAbs(p[j] * ref[c], 1e-12));
            }
        }
    }
    SECTION("k = n = 2 equals the explicit weighted sum") {
        auto layer = make_layer(4, 8, 2, 2);
        randomize_biases(layer, rng);
        Tape<double> tape;
        const Scenario s{TimeMoment::AD, TimeInterval::LT};
        auto y = layer.forward(tape, t, s);
        for (std::size_t r = 0; r < 6; ++r) {
            auto row = t.values().subspan(r * 4, 4);
            auto p = gate_ref(layer, s, row);
            auto e0 = expert_ref(layer, layer.expert(s, 0), row);
            auto e1 = expert_ref(layer, layer.expert(s, 1), row);
            for (std::size_t c = 0; c < 4; ++c)
                CHECK_THAT(y[r * 4 + c], WithinAbs(p[0] * e0[c] + p[1] * e1[c], 1e-6));
        }
    }
}

TEST_CASE("top-1 routing evaluates one expert per token", "[moae][sparsity]") {
    auto layer = make_layer(8, 16, 3, 1, 21, 1.0);
    Rng rng(22);
    MoaeStats stats;
    for (Scenario s : kAllScenarios) {
        Tape<double> tape;
        (void)layer.forward(tape, random_tensor(rng, {17, 8}, 2.0), s, &stats);
    }
    CHECK(stats.tokens == 6 * 17);
    CHECK(stats.expert_evaluations == stats.tokens);
    for (auto n : stats.tokens_per_scenario) CHECK(n == 17);

    auto dense = make_layer(8, 16, 3, 3);
    MoaeStats dstats;
    Tape<double> tape;
    (void)dense.forward(tape, random_tensor(rng, {5, 8}), kDtSt, &dstats);
    CHECK(dstats.expert_evaluations == 15);
}

TEST_CASE("perturbing a shared attribute layer reaches exactly the experts carrying its kind", "[moae][aliasing]") {
    auto layer = make_layer(4, 8, 2, 1);
    Rng rng(31);
    auto t = random_tensor(rng, {3, 4});
    const auto dt0 = layer.layer_index(AttributeKind::DT, 0);

    auto hidden = [&](Scenario s, std::size_t j) {
        Tape<double> tape;
        const auto& in = layer.attribute_layers()[layer.expert(s, j).inner];
        auto h = tensor::gelu(tape, tensor::linear(tape, t, in.weight, in.bias));
        return std::vector<double>(h.values().begin(), h.values().end());
    };
    auto outputs = [&] {
        std::vector<std::vector<double>> all;
        for (Scenario s : kAllScenarios)
            for (std::size_t j = 0; j < 2; ++j) {
                Tape<double> tape;
                auto y = layer.expert_forward(tape, t, s, j);
                all.emplace_back(y.values().begin(), y.values().end());
            }
        return all;
    };

    const auto before_st = hidden(kDtSt, 0), before_lt = hidden(kDtLt, 0);
    const auto before = outputs();
    CHECK(before_st == before_lt);
    layer.attribute_layers()[dt0].weight[5] += 0.25;
    const auto after_st = hidden(kDtSt, 0), after_lt = hidden(kDtLt, 0);
    const auto after = outputs();
    CHECK(after_st != before_st);
    CHECK(after_st == after_lt);

    for (Scenario s : kAllScenarios) {
        for (std::size_t j = 0; j < 2; ++j) {
            const std::size_t idx = s.index() * 2 + j;
            const bool touched = s.tm == TimeMoment::DT && j == 0;
            INFO(to_string(s) << " expert " << j);
            CHECK((after[idx] != before[idx]) == touched);
        }
    }
}

TEST_CASE("gradients reach only selected experts and the routed gate", "[moae][gradient]") {
    auto layer = make_layer(4, 8, 3, 1, 41, 0.8);
    Rng rng(42);
    auto t = random_tensor(rng, {2, 4}, 2.0);
    const Scenario s{TimeMoment::NT, TimeInterval::ST};

    Tape<double> tape;
    auto g = layer.gate(tape, t, s);
    std::set<std::size_t> selected;
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < 3; ++j)
            if (g[r * 3 + j] != 0.0) selected.insert(j);

    Tape<double> tape2;
    tape2.backward(tensor::sum(tape2, layer.forward(tape2, t, s)));

    auto nonzero = [](const D& x) {
        return x.has_grad() && std::any_of(x.grad().begin(), x.grad().end(), [](double v) { return v != 0.0; });
    };
    for (const auto& a : layer.attribute_layers()) {
        const bool used = (a.kind == AttributeKind::NT || a.kind == AttributeKind::ST) && selected.count(a.instance);
        INFO(to_string(a.kind) << a.instance);
        CHECK(nonzero(a.weight) == used);
    }
    for (Scenario other : kAllScenarios) CHECK(nonzero(layer.gate_weight(other)) == (other == s));
}

TEST_CASE("moae_forward passes the finite-difference check away from ties", "[moae][gradient]") {
    for (std::size_t k : {1u, 2u}) {
        auto layer = make_layer(4, 6, 2, k, 50 + k, 0.7);
        Rng rng(60 + k);
        randomize_biases(layer, rng);
        auto t = random_tensor(rng, {3, 4}, 1.5, true);
        const Scenario s{TimeMoment::AD, TimeInterval::ST};
        auto e = layer.expert(s, 0), e1 = layer.expert(s, 1);
        std::vector<D> inputs{t, layer.gate_weight(s), layer.attribute_layers()[e.inner].weight,
                              layer.attribute_layers()[e.outer].weight, layer.attribute_layers()[e1.inner].bias};
        auto f = [&](Tape<double>& tape) {
            auto y = layer.forward(tape, t, s);
            return tensor::sum(tape, tensor::mul(tape, y, y));
        };
        auto r = tensor::finite_diff_check<double>(f, inputs);
        INFO("k=" << k << " worst input " << r.worst_input << " index " << r.worst_index);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("param_count", "[moae][params]") {
    const auto c = param_count(MoaeConfig{4, 8, 1, 1});
    CHECK(c.shared_experts == 192);
    CHECK(c.unshared_experts == 456);
    CHECK(c.gating == 24);

    // Cross-check against instantiated scalars.
    Rng rng(0);
    MoaeLayer<double> layer(MoaeConfig{4, 8, 1, 1}, rng, 0.02);
    std::vector<tensor::NamedTensor<double>> named;
    layer.collect_parameters("", named);
    std::size_t experts = 0, gating = 0;
    for (const auto& p : named) (p.name.rfind("gate.", 0) == 0 ? gating : experts) += p.tensor.numel();
    CHECK(experts == c.shared_experts);
    CHECK(gating == c.gating);

    const auto zero = param_count(MoaeConfig{4, 8, 0, 1});
    CHECK(zero.shared() == 0);
    CHECK(zero.unshared() == 0);

    for (std::size_t d : {1u, 3u, 16u})
        for (std::size_t h : {1u, 5u, 32u})
            for (std::size_t n : {1u, 2u, 4u})
                for (auto order : {AttributeOrder::moment_inner, AttributeOrder::interval_inner}) {
                    const auto pc = param_count(MoaeConfig{d, h, n, 1, order});
                    CHECK(pc.shared() < pc.unshared());
                }
}

TEST_CASE("config validation", "[moae]") {
    CHECK_THROWS_AS(MoaeConfig({4, 8, 2, 0}).validate(), ValidationError);
    CHECK_THROWS_AS(MoaeConfig({4, 8, 2, 3}).validate(), ValidationError);
    CHECK_THROWS_AS(MoaeConfig({0, 8, 2, 1}).validate(), ValidationError);
    CHECK_NOTHROW(MoaeConfig({4, 8, 2, 2}).validate());
}
