// SPDX-License-Identifier: Apache-2.0

#include "uniat/cli/grad_suite.hpp"

#include <cstdio>
#include <functional>
#include <map>

#include "uniat/core/error.hpp"
#include "uniat/core/rng.hpp"
#include "uniat/objective/objective.hpp"
#include "uniat/tensor/grad_check.hpp"
#include "uniat/tensor/ops.hpp"

namespace uniat::cli {

using tensor::Tape;
using D = tensor::Tensor<double>;

namespace {

D random(Rng& rng, tensor::Shape shape, double scale = 1.0) {
    std::vector<double> v(tensor::shape_numel(shape));
    for (double& x : v) x = rng.uniform(-scale, scale);
    return D(std::move(shape), std::move(v));
}

struct Case {
    tensor::ScalarFn<double> f;
    std::vector<D> inputs;
};

// Each primitive is probed through a fixed random projection so that every
// output coordinate carries a distinct adjoint.
std::map<std::string, Case> primitive_cases(Rng& rng) {
    using namespace tensor;
    D a = random(rng, {3, 4}), b = random(rng, {4, 5}), c = random(rng, {3, 4});
    D bias = random(rng, {5}), probe = random(rng, {3, 5}), probe34 = random(rng, {3, 4});
    D tile = random(rng, {1, 4}), rowscale = random(rng, {3}), g4 = random(rng, {4});
    D qkv = random(rng, {10, 12}), probe_att = random(rng, {10, 4});
    auto idx = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{2, 0, 2});
    auto cols = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{1, 3, 0});
    auto cand = std::make_shared<std::vector<std::uint8_t>>(std::vector<std::uint8_t>{1, 1, 0, 1, 1, 1, 1, 1, 1, 1, 0, 1});

    std::map<std::string, Case> m;
    m["matmul"] = {[=](Tape<double>& t) { return sum(t, mul(t, matmul(t, a, b), probe)); }, {a, b}};
    m["linear"] = {[=](Tape<double>& t) { return sum(t, mul(t, linear(t, a, b, bias), probe)); }, {a, b, bias}};
    m["add"] = {[=](Tape<double>& t) { return sum(t, mul(t, add(t, a, c), probe34)); }, {a, c}};
    m["add_tiled"] = {[=](Tape<double>& t) { return sum(t, mul(t, add_tiled(t, a, tile), probe34)); }, {a, tile}};
    m["mul"] = {[=](Tape<double>& t) { return sum(t, mul(t, a, c)); }, {a, c}};
    m["scale"] = {[=](Tape<double>& t) { return sum(t, mul(t, scale(t, a, -1.7), probe34)); }, {a}};
    m["gelu"] = {[=](Tape<double>& t) { return sum(t, mul(t, gelu(t, a), probe34)); }, {a}};
    m["softmax"] = {[=](Tape<double>& t) { return sum(t, mul(t, softmax(t, a, 1), probe34)); }, {a}};
    m["layernorm"] = {[=](Tape<double>& t) { return sum(t, mul(t, layernorm(t, a, g4, tile, 1e-5), probe34)); },
                      {a, g4, tile}};
    m["batchnorm"] = {[=](Tape<double>& t) { return sum(t, mul(t, batchnorm(t, a, g4, tile, 1e-5), probe34)); },
                      {a, g4, tile}};
    m["sum"] = {[=](Tape<double>& t) { return scale(t, sum(t, mul(t, a, probe34)), 0.5); }, {a}};
    m["mean"] = {[=](Tape<double>& t) { return mean(t, mul(t, a, a)); }, {a}};
    m["gather_rows"] = {[=](Tape<double>& t) { return sum(t, mul(t, gather_rows(t, a, *idx), probe34)); }, {a}};
    m["scatter_rows"] = {[=](Tape<double>& t) { return sum(t, mul(t, scatter_rows(t, a, *idx, 3), probe34)); }, {a}};
    m["scale_rows"] = {[=](Tape<double>& t) { return sum(t, mul(t, scale_rows(t, a, rowscale), probe34)); },
                       {a, rowscale}};
    m["pick"] = {[=](Tape<double>& t) { return sum(t, mul(t, pick(t, a, *cols), rowscale)); }, {a}};
    m["topk_mask"] = {[=](Tape<double>& t) { return sum(t, mul(t, topk_mask(t, a, 2), probe34)); }, {a}};
    m["attention"] = {[=](Tape<double>& t) { return sum(t, mul(t, attention(t, qkv, 2, 5, 2, 2), probe_att)); },
                      {qkv}};
    m["restricted_nll"] = {[=](Tape<double>& t) { return sum(t, restricted_nll(t, a, *cols, *cand)); }, {a}};
    return m;
}

// Two layers, d = 16, all six scenarios supervised. HDW weights are batch
// constants, so they are switched off here; key biases and the final
// layernorm bias (absorbed by BNNeck's batch mean) have exactly zero gradient
// and are left out.
Case pipeline_case() {
    backbone::ModelConfig mc;
    mc.image_height = 8;
    mc.image_width = 8;
    mc.embed_dim = 16;
    mc.num_layers = 2;
    mc.num_heads = 2;
    mc.ffn_hidden = 24;
    mc.experts_per_scenario = 2;
    mc.init_std = 0.3;
    auto reg = std::make_shared<objective::LabelRegistry>();
    reg->add(10, 0);
    reg->add(10, 1);
    reg->add(20, 0);
    reg->add(20, 1);
    reg->add(30, 0);
    objective::ObjectiveConfig oc;
    oc.num_persons = reg->num_persons();
    oc.num_clothes = reg->num_clothes();
    oc.hdw = false;
    auto model = std::make_shared<objective::Model<double>>(objective::init_model<double>(mc, oc, 9));
    Rng rng(10);
    for (auto& h : model->heads)
        for (double& v : h.classifier.values()) v = rng.uniform(-0.5, 0.5);
    auto images = std::make_shared<std::vector<Image>>();
    for (int i = 0; i < 4; ++i) {
        Image img(8, 8, 3);
        for (float& p : img.pixels) p = static_cast<float>(rng.uniform(-1.0, 1.0));
        images->push_back(std::move(img));
    }
    auto labels = std::make_shared<objective::BatchLabels>(objective::BatchLabels{
        {0, 1, 2, 0}, {0, 2, 4, 1}, {Modality::RGB, Modality::IR, Modality::RGB, Modality::IR}});
    Case c;
    for (auto& n : model->named_parameters())
        if (n.name.find("qkv.bias") == std::string::npos && n.name != "final_ln.bias") c.inputs.push_back(n.tensor);
    c.f = [=](Tape<double>& tape) { return objective::compute_loss(tape, *model, *images, *labels, *reg, false).total; };
    return c;
}

GradCheckRow run_case(const std::string& name, Case& c, const GradSuiteOptions& options) {
    tensor::GradCheckOptions<double> o;
    o.step = options.step;
    o.fault_op = options.fault_op;
    o.fault_scale = options.fault_scale;
    const auto r = tensor::finite_diff_check<double>(c.f, c.inputs, o);
    return {name, r.max_rel_error, r.coordinates, r.max_rel_error <= kGradTolerance};
}

}  // namespace

std::vector<GradCheckRow> run_grad_suite(const GradSuiteOptions& options) {
    if (!options.fault_op.empty()) {
        bool known = false;
        for (auto n : tensor::primitive_names()) known |= n == options.fault_op;
        if (!known) throw UsageError("grad-check: unknown op '" + options.fault_op + "'");
    }
    Rng rng(2024);
    auto cases = primitive_cases(rng);
    std::vector<GradCheckRow> rows;
    for (auto name : tensor::primitive_names()) {
        auto it = cases.find(std::string(name));
        if (it == cases.end()) throw Error("grad-check: no case for primitive '" + std::string(name) + "'");
        rows.push_back(run_case(it->first, it->second, options));
    }
    if (options.include_pipeline) {
        auto c = pipeline_case();
        rows.push_back(run_case("pipeline", c, options));
    }
    return rows;
}

std::string format_grad_table(const std::vector<GradCheckRow>& rows) {
    std::string out = "component        max_rel_error  coords  status\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-16s %13.3e  %6zu  %s\n", r.component.c_str(), r.max_rel_error,
                      r.coordinates, r.passed ? "PASS" : "FAIL");
        out += line;
    }
    return out;
}

}  // namespace uniat::cli
