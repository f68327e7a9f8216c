// SPDX-License-Identifier: Apache-2.0
//
// BNNeck classifier heads, the per-scenario identity loss and the weighted
// total over scenarios, plus the model bundle (backbone + heads) that training
// and evaluation share.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uniat/backbone/vit.hpp"
#include "uniat/core/image.hpp"
#include "uniat/core/scenario.hpp"
#include "uniat/objective/hdw.hpp"
#include "uniat/objective/labels.hpp"
#include "uniat/tensor/ops.hpp"
#include "uniat/tensor/tensor.hpp"

namespace uniat::objective {

enum class CategorySpace : std::uint8_t { person, clothes };

struct ObjectiveConfig {
    /// Scenario-aware negatives and clothes-space ST heads; otherwise every
    /// head is a plain person classifier.
    bool scenario_loss = true;
    bool hdw = true;
    double hdw_exponent = 0.5;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    std::size_t num_persons = 0;
    std::size_t num_clothes = 0;

    void validate(const backbone::ModelConfig& model) const;
};

template <typename T>
struct ScenarioHead {
    Scenario scenario;
    CategorySpace space = CategorySpace::person;
    tensor::Tensor<T> bn_gain;  // [d], trainable
    tensor::Tensor<T> bn_bias;  // [d], frozen at zero
    std::vector<T> running_mean;
    std::vector<T> running_var;
    tensor::Tensor<T> classifier;  // [d x C], no bias
};

template <typename T>
struct Model {
    backbone::BackboneParams<T> backbone;
    ObjectiveConfig objective;
    /// Six heads in scenario order, or one when the CLS token is shared.
    std::vector<ScenarioHead<T>> heads;

    [[nodiscard]] const ScenarioHead<T>& head(Scenario s) const { return heads[heads.size() == 1 ? 0 : s.index()]; }
    [[nodiscard]] ScenarioHead<T>& head(Scenario s) { return heads[heads.size() == 1 ? 0 : s.index()]; }

    /// Backbone parameters followed by head gains and classifiers.
    [[nodiscard]] std::vector<tensor::NamedTensor<T>> named_parameters() const;
};

template <typename T>
[[nodiscard]] Model<T> init_model(const backbone::ModelConfig& model, const ObjectiveConfig& objective,
                                  std::uint64_t seed);

/// Labels of one batch, as dense registry indices.
struct BatchLabels {
    std::vector<std::size_t> person;
    std::vector<std::size_t> clothes;
    std::vector<Modality> modality;

    [[nodiscard]] std::size_t size() const noexcept { return person.size(); }
};

/// Training-mode BNNeck then classifier; logits [m x C]. `moments` receives
/// the batch statistics.
template <typename T>
tensor::Tensor<T> head_logits(tensor::Tape<T>& tape, const ScenarioHead<T>& head, const tensor::Tensor<T>& features,
                              T eps, tensor::BatchMoments<T>* moments = nullptr);

/// Exponential moving average with the unbiased batch variance.
template <typename T>
void update_running_stats(ScenarioHead<T>& head, const tensor::BatchMoments<T>& moments, double momentum);

/// Evaluation-mode BNNeck on plain rows [m x d] using the running statistics.
template <typename T>
[[nodiscard]] std::vector<T> bnneck_eval(const ScenarioHead<T>& head, std::span<const T> features, T eps);

/// Restricted softmax loss per row: -log softmax over {gt} u negatives.
/// Throws ValidationError when a gt index is outside the logit width.
template <typename T>
tensor::Tensor<T> scenario_identity_loss(tensor::Tape<T>& tape, const tensor::Tensor<T>& logits,
                                         std::span<const NegativeSet> negatives);

template <typename T>
struct ScenarioLoss {
    Scenario scenario;
    std::vector<std::size_t> samples;  // batch rows supervised for this scenario
    tensor::Tensor<T> losses;          // [samples.size()], undefined when empty
};

/// Sum over scenarios of w[s] * mean loss; empty scenarios contribute nothing.
/// Weights enter as constants.
template <typename T>
tensor::Tensor<T> total_loss(tensor::Tape<T>& tape, std::span<const ScenarioLoss<T>> losses,
                             const std::array<double, kNumScenarios>& weights);

template <typename T>
[[nodiscard]] std::array<std::vector<double>, kNumScenarios> loss_values(std::span<const ScenarioLoss<T>> losses);

template <typename T>
struct LossBreakdown {
    tensor::Tensor<T> total;
    std::vector<ScenarioLoss<T>> scenarios;
    std::array<double, kNumScenarios> mean_loss{};  // NaN when unsupervised
    HdwState hdw;
};

/// Full training objective for one batch. Running BNNeck statistics are
/// updated only when update_stats is set.
template <typename T>
LossBreakdown<T> compute_loss(tensor::Tape<T>& tape, Model<T>& model, std::span<const Image> images,
                              const BatchLabels& labels, const LabelRegistry& registry, bool update_stats,
                              moae::MoaeStats* stats = nullptr);

/// Same, starting from backbone CLS features (one [batch x d] per scenario).
template <typename T>
LossBreakdown<T> compute_loss_from_features(tensor::Tape<T>& tape, Model<T>& model,
                                            const std::array<tensor::Tensor<T>, kNumScenarios>& cls,
                                            const BatchLabels& labels, const LabelRegistry& registry,
                                            bool update_stats);

/// Post-BNNeck retrieval features per scenario, each row-major [batch x d].
template <typename T>
[[nodiscard]] std::array<std::vector<float>, kNumScenarios> retrieval_features(const Model<T>& model,
                                                                             std::span<const Image> images);

}  // namespace uniat::objective
