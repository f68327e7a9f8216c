// SPDX-License-Identifier: Apache-2.0

#include "uniat/objective/objective.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "uniat/core/error.hpp"
#include "uniat/core/rng.hpp"

namespace uniat::objective {

using tensor::Tape;
using tensor::Tensor;
namespace ops = uniat::tensor;

namespace {

constexpr std::uint64_t kHeadSeedSalt = 0x9e3779b97f4a7c15ULL;
constexpr double kClassifierStd = 0.001;

}  // namespace

void ObjectiveConfig::validate(const backbone::ModelConfig& model) const {
    if (num_persons < 2) throw ValidationError("objective: at least two training persons are required");
    if (scenario_loss && num_clothes == 0) throw ValidationError("objective: scenario loss needs clothes labels");
    if (model.shared_token && (scenario_loss || hdw))
        throw ValidationError("objective: a shared token supports neither scenario loss nor HDW");
    if (!(hdw_exponent > 0)) throw ValidationError("objective: hdw_exponent must be positive");
    if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ValidationError("objective: bn_momentum must lie in (0, 1]");
    if (!(bn_eps > 0)) throw ValidationError("objective: bn_eps must be positive");
}

template <typename T>
std::vector<tensor::NamedTensor<T>> Model<T>::named_parameters() const {
    auto out = backbone.named_parameters();
    for (const auto& h : heads) {
        const std::string p = "head." + (heads.size() == 1 ? std::string("shared") : to_string(h.scenario)) + ".";
        out.push_back({p + "bn.gain", h.bn_gain});
        out.push_back({p + "classifier", h.classifier});
    }
    return out;
}

template <typename T>
Model<T> init_model(const backbone::ModelConfig& model, const ObjectiveConfig& objective, std::uint64_t seed) {
    objective.validate(model);
    Model<T> m;
    m.backbone = backbone::init_params<T>(model, seed);
    m.objective = objective;
    Rng rng(seed ^ kHeadSeedSalt);
    const std::size_t d = model.embed_dim;
    const std::size_t count = model.shared_token ? 1 : kNumScenarios;
    for (std::size_t i = 0; i < count; ++i) {
        ScenarioHead<T> h;
        h.scenario = kAllScenarios[i];
        h.space = objective.scenario_loss && h.scenario.ti == TimeInterval::ST ? CategorySpace::clothes
                                                                               : CategorySpace::person;
        const std::size_t c = h.space == CategorySpace::clothes ? objective.num_clothes : objective.num_persons;
        h.bn_gain = Tensor<T>::full({d}, T(1), true);
        h.bn_bias = Tensor<T>::zeros({d});
        h.running_mean.assign(d, T(0));
        h.running_var.assign(d, T(1));
        std::vector<T> w(d * c);
        for (T& v : w) v = static_cast<T>(rng.normal() * kClassifierStd);
        h.classifier = Tensor<T>({d, c}, std::move(w), true);
        m.heads.push_back(std::move(h));
    }
    return m;
}

template <typename T>
Tensor<T> head_logits(Tape<T>& tape, const ScenarioHead<T>& head, const Tensor<T>& features, T eps,
                      tensor::BatchMoments<T>* moments) {
    auto bn = ops::batchnorm(tape, features, head.bn_gain, head.bn_bias, eps, moments);
    return ops::matmul(tape, bn, head.classifier);
}

template <typename T>
void update_running_stats(ScenarioHead<T>& head, const tensor::BatchMoments<T>& moments, double momentum) {
    if (moments.count == 0) return;
    const double unbias = moments.count > 1 ? double(moments.count) / double(moments.count - 1) : 1.0;
    for (std::size_t k = 0; k < head.running_mean.size(); ++k) {
        head.running_mean[k] =
            static_cast<T>((1 - momentum) * head.running_mean[k] + momentum * double(moments.mean[k]));
        head.running_var[k] =
            static_cast<T>((1 - momentum) * head.running_var[k] + momentum * double(moments.var[k]) * unbias);
    }
}

template <typename T>
std::vector<T> bnneck_eval(const ScenarioHead<T>& head, std::span<const T> features, T eps) {
    const std::size_t d = head.running_mean.size();
    if (d == 0 || features.size() % d != 0) throw ShapeError("bnneck: feature width does not match the head");
    std::vector<T> out(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const std::size_t k = i % d;
        out[i] = (features[i] - head.running_mean[k]) / std::sqrt(head.running_var[k] + eps) * head.bn_gain[k] +
                 head.bn_bias[k];
    }
    return out;
}

template <typename T>
Tensor<T> scenario_identity_loss(Tape<T>& tape, const Tensor<T>& logits, std::span<const NegativeSet> negatives) {
    const std::size_t m = logits.rows(), c = logits.cols();
    if (negatives.size() != m) {
        throw ShapeError("identity loss: " + std::to_string(negatives.size()) + " negative sets for " +
                         std::to_string(m) + " rows");
    }
    std::vector<std::size_t> target(m);
    std::vector<std::uint8_t> candidates(m * c, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& n = negatives[i];
        if (n.gt_category >= c) {
            throw ValidationError("identity loss: gt category " + std::to_string(n.gt_category) +
                                  " outside logit width " + std::to_string(c));
        }
        target[i] = n.gt_category;
        candidates[i * c + n.gt_category] = 1;
        for (std::size_t j : n.members) {
            if (j >= c) throw ValidationError("identity loss: negative category " + std::to_string(j) + " out of range");
            candidates[i * c + j] = 1;
        }
    }
    return ops::restricted_nll(tape, logits, target, candidates);
}

template <typename T>
Tensor<T> total_loss(Tape<T>& tape, std::span<const ScenarioLoss<T>> losses,
                     const std::array<double, kNumScenarios>& weights) {
    Tensor<T> total;
    for (const auto& sl : losses) {
        if (sl.samples.empty()) continue;
        auto term = ops::scale(tape, ops::mean(tape, sl.losses), static_cast<T>(weights[sl.scenario.index()]));
        total = total.defined() ? ops::add(tape, total, term) : term;
    }
    if (!total.defined()) throw ValidationError("total loss: no supervised token in the batch");
    return total;
}

template <typename T>
std::array<std::vector<double>, kNumScenarios> loss_values(std::span<const ScenarioLoss<T>> losses) {
    std::array<std::vector<double>, kNumScenarios> out;
    for (const auto& sl : losses) {
        if (sl.samples.empty()) continue;
        for (T v : sl.losses.values()) out[sl.scenario.index()].push_back(static_cast<double>(v));
    }
    return out;
}

template <typename T>
LossBreakdown<T> compute_loss_from_features(Tape<T>& tape, Model<T>& model,
                                            const std::array<Tensor<T>, kNumScenarios>& cls,
                                            const BatchLabels& labels, const LabelRegistry& registry,
                                            bool update_stats) {
    const auto& cfg = model.objective;
    const bool shared = model.heads.size() == 1;
    const std::size_t b = labels.size();
    if (labels.clothes.size() != b || labels.modality.size() != b)
        throw ValidationError("batch labels have inconsistent lengths");
    LossBreakdown<T> out;
    out.mean_loss.fill(std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < (shared ? 1 : kNumScenarios); ++i) {
        const Scenario s = kAllScenarios[i];
        if (cls[i].rows() != b) throw ShapeError("CLS features do not match the batch size");
        ScenarioLoss<T> sl{s, {}, {}};
        for (std::size_t r = 0; r < b; ++r)
            if (shared || supervises(labels.modality[r], s)) sl.samples.push_back(r);
        if (!sl.samples.empty()) {
            auto& head = model.heads[i];
            std::vector<NegativeSet> negs;
            negs.reserve(sl.samples.size());
            for (std::size_t r : sl.samples) {
                const Scenario neg_space = cfg.scenario_loss ? s : Scenario{s.tm, TimeInterval::LT};
                negs.push_back(build_negative_set(neg_space, labels.person[r], labels.clothes[r], registry));
            }
            tensor::BatchMoments<T> moments;
            auto logits = head_logits(tape, head, ops::gather_rows(tape, cls[i], sl.samples),
                                      static_cast<T>(cfg.bn_eps), &moments);
            sl.losses = scenario_identity_loss(tape, logits, std::span<const NegativeSet>(negs));
            if (update_stats) update_running_stats(head, moments, cfg.bn_momentum);
            double acc = 0;
            for (T v : sl.losses.values()) acc += static_cast<double>(v);
            out.mean_loss[i] = acc / static_cast<double>(sl.samples.size());
        }
        out.scenarios.push_back(std::move(sl));
    }
    std::span<const ScenarioLoss<T>> view(out.scenarios);
    out.hdw = cfg.hdw ? hdw_weights(batch_confidences(loss_values(view)), cfg.hdw_exponent) : uniform_weights();
    out.total = total_loss(tape, view, out.hdw.w);
    return out;
}

template <typename T>
LossBreakdown<T> compute_loss(Tape<T>& tape, Model<T>& model, std::span<const Image> images,
                              const BatchLabels& labels, const LabelRegistry& registry, bool update_stats,
                              moae::MoaeStats* stats) {
    if (images.size() != labels.size()) throw ValidationError("batch images and labels differ in length");
    auto features = backbone::forward(tape, model.backbone, images, stats);
    return compute_loss_from_features(tape, model, features.cls, labels, registry, update_stats);
}

template <typename T>
std::array<std::vector<float>, kNumScenarios> retrieval_features(const Model<T>& model,
                                                                 std::span<const Image> images) {
    auto tape = Tape<T>::inference();
    auto features = backbone::forward(tape, model.backbone, images);
    std::array<std::vector<float>, kNumScenarios> out;
    for (Scenario s : kAllScenarios) {
        const auto& head = model.head(s);
        auto bn = bnneck_eval(head, std::span<const T>(features.cls[s.index()].values()),
                              static_cast<T>(model.objective.bn_eps));
        out[s.index()].assign(bn.begin(), bn.end());
    }
    return out;
}

#define UNIAT_INSTANTIATE_OBJECTIVE(T)                                                                          \
    template struct Model<T>;                                                                                  \
    template Model<T> init_model<T>(const backbone::ModelConfig&, const ObjectiveConfig&, std::uint64_t);      \
    template Tensor<T> head_logits<T>(Tape<T>&, const ScenarioHead<T>&, const Tensor<T>&, T,                   \
                                      tensor::BatchMoments<T>*);                                               \
    template void update_running_stats<T>(ScenarioHead<T>&, const tensor::BatchMoments<T>&, double);           \
    template std::vector<T> bnneck_eval<T>(const ScenarioHead<T>&, std::span<const T>, T);                     \
    template Tensor<T> scenario_identity_loss<T>(Tape<T>&, const Tensor<T>&, std::span<const NegativeSet>);    \
    template Tensor<T> total_loss<T>(Tape<T>&, std::span<const ScenarioLoss<T>>,                               \
                                     const std::array<double, kNumScenarios>&);                                \
    template std::array<std::vector<double>, kNumScenarios> loss_values<T>(std::span<const ScenarioLoss<T>>);  \
    template LossBreakdown<T> compute_loss_from_features<T>(Tape<T>&, Model<T>&,                               \
                                                            const std::array<Tensor<T>, kNumScenarios>&,       \
                                                            const BatchLabels&, const LabelRegistry&, bool);   \
    template LossBreakdown<T> compute_loss<T>(Tape<T>&, Model<T>&, std::span<const Image>, const BatchLabels&, \
                                              const LabelRegistry&, bool, moae::MoaeStats*);                   \
    template std::array<std::vector<float>, kNumScenarios> retrieval_features<T>(const Model<T>&,              \
                                                                                 std::span<const Image>);

UNIAT_INSTANTIATE_OBJECTIVE(float)
UNIAT_INSTANTIATE_OBJECTIVE(double)

#undef UNIAT_INSTANTIATE_OBJECTIVE

}  // namespace uniat::objective
