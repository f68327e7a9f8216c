// SPDX-License-Identifier: Apache-2.0

#include "uniat/cli/train.hpp"

#include <cmath>
#include <json.hpp>
#include <ostream>

#include "uniat/core/error.hpp"
#include "uniat/core/io.hpp"
#include "uniat/data/sampler.hpp"

namespace uniat::cli {

using nlohmann::ordered_json;

namespace {

ordered_json maybe(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json per_scenario(const std::array<double, kNumScenarios>& v) {
    ordered_json j = ordered_json::object();
    for (Scenario s : kAllScenarios) j[to_string(s)] = maybe(v[s.index()]);
    return j;
}

Checkpoint snapshot(const RunConfig& config, const objective::Model<float>& model,
                    const std::vector<tensor::NamedTensor<float>>& params,
                    const std::vector<std::vector<float>>& velocity, const Rng& rng, std::size_t step) {
    // The output location is not part of the model; leaving it out keeps
    // checkpoints of identical runs in different directories byte-identical.
    RunConfig stored = config;
    stored.out.clear();
    Checkpoint c;
    c.step = step;
    c.config_json = to_json(stored);
    c.rng_state = rng.state();
    c.arrays = model_arrays(model);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& shape = params[i].tensor.shape();
        c.arrays.push_back({"opt.velocity." + params[i].name, {shape.begin(), shape.end()}, velocity[i]});
    }
    return c;
}

void dump_batch(const std::filesystem::path& path, std::size_t step, const data::DatasetManifest& manifest,
                const std::vector<std::size_t>& batch, const std::array<double, kNumScenarios>& losses) {
    ordered_json j;
    j["step"] = step;
    j["losses"] = per_scenario(losses);
    j["records"] = ordered_json::array();
    for (std::size_t r : batch) {
        const auto& rec = manifest.records[r];
        j["records"].push_back({{"index", r},
                                {"person", rec.person_id},
                                {"clothes", rec.clothes_id},
                                {"modality", std::string(to_string(rec.modality))},
                                {"camera", rec.camera_id}});
    }
    atomic_write(path, j.dump(2) + "\n");
}

}  // namespace

objective::LabelRegistry train_registry(const data::DatasetManifest& manifest) {
    objective::LabelRegistry reg;
    for (std::size_t i : manifest.indices(data::Split::train)) {
        const auto& r = manifest.records[i];
        reg.add(r.person_id, r.clothes_id);
    }
    return reg;
}

RunConfig resolve_config(RunConfig config, const data::DatasetManifest& manifest) {
    if (manifest.image_height != config.model.image_height || manifest.image_width != config.model.image_width ||
        manifest.channels != config.model.channels) {
        throw ValidationError("config: model image geometry does not match the manifest");
    }
    const auto reg = train_registry(manifest);
    config.objective.num_persons = reg.num_persons();
    config.objective.num_clothes = reg.num_clothes();
    config.validate();
    config.objective.validate(config.model);
    return config;
}

std::string log_line(const StepRecord& r) {
    ordered_json j;
    j["step"] = r.step;
    j["lr"] = r.lr;
    j["total"] = maybe(r.total);
    j["loss"] = per_scenario(r.loss);
    j["p_tm"] = per_scenario(r.hdw.p_tm);
    j["p_ti"] = per_scenario(r.hdw.p_ti);
    j["w"] = per_scenario(r.hdw.w);
    return j.dump();
}

TrainOutput train(const RunConfig& config, const data::DatasetManifest& manifest,
                  const std::filesystem::path& out_dir, std::ostream* progress) {
    const auto registry = train_registry(manifest);
    if (registry.num_persons() != config.objective.num_persons ||
        registry.num_clothes() != config.objective.num_clothes) {
        throw ValidationError("train: config class counts do not match the manifest (resolve the config first)");
    }
    const auto train_records = manifest.indices(data::Split::train);
    for (std::size_t i : train_records)
        if (manifest.records[i].image.empty()) throw ValidationError("train: records need inline images");

    TrainOutput out{objective::init_model<float>(config.model, config.objective, config.seed), {}, {}};
    auto& model = out.model;
    const auto params = model.named_parameters();
    std::vector<std::vector<float>> velocity;
    for (const auto& p : params) velocity.emplace_back(p.tensor.numel(), 0.0f);

    const data::PkSampler sampler(manifest);
    Rng rng(config.seed);
    const auto& opt = config.optimizer;
    const std::size_t total_steps = opt.total_steps(train_records.size());
    const bool write = !out_dir.empty();
    if (write) std::filesystem::create_directories(out_dir / "checkpoints");
    std::string log_text;

    for (std::size_t step = 0; step < total_steps; ++step) {
        const auto batch = sampler.sample(opt.persons_per_batch, opt.instances_per_person, rng);
        std::vector<Image> images;
        objective::BatchLabels labels;
        for (std::size_t r : batch) {
            const auto& rec = manifest.records[r];
            images.push_back(data::augment(rec.image, rng, config.data.augment));
            labels.person.push_back(registry.person_index(rec.person_id));
            labels.clothes.push_back(registry.clothes_index(rec.person_id, rec.clothes_id));
            labels.modality.push_back(rec.modality);
        }

        tensor::Tape<float> tape;
        auto loss = objective::compute_loss(tape, model, images, labels, registry, true);
        StepRecord rec{step, scheduled_lr(opt, step, total_steps), double(loss.total.values()[0]), loss.mean_loss,
                       loss.hdw};
        if (!std::isfinite(rec.total)) {
            std::string where;
            if (write) {
                dump_batch(out_dir / "nan_batch.json", step, manifest, batch, loss.mean_loss);
                atomic_write(out_dir / "train_log.jsonl", log_text);
                where = "; batch dumped to " + (out_dir / "nan_batch.json").string();
            }
            throw NumericalError("train: non-finite loss at step " + std::to_string(step) + where);
        }
        tape.backward(loss.total);

        const float lr = static_cast<float>(rec.lr);
        const float mom = static_cast<float>(opt.momentum), wd = static_cast<float>(opt.weight_decay);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = params[i].tensor;
            if (!w.has_grad()) continue;
            const auto g = w.grad();
            auto values = w.values();
            auto& v = velocity[i];
            const bool decay = w.ndim() >= 2;
            for (std::size_t k = 0; k < values.size(); ++k) {
                const float gk = g[k] + (decay ? wd * values[k] : 0.0f);
                v[k] = mom * v[k] + gk;
                values[k] -= lr * v[k];
            }
            w.drop_grad();
        }

        log_text += log_line(rec) + "\n";
        if (progress && (step % 50 == 0 || step + 1 == total_steps))
            *progress << "step " << step << " lr " << rec.lr << " loss " << rec.total << "\n";
        out.log.push_back(rec);
        if (write && opt.checkpoint_every && (step + 1) % opt.checkpoint_every == 0 && step + 1 < total_steps) {
            save_checkpoint(snapshot(config, model, params, velocity, rng, step + 1),
                            out_dir / "checkpoints" / ("step_" + std::to_string(step + 1) + ".ckpt"));
            atomic_write(out_dir / "train_log.jsonl", log_text);
        }
    }
    out.checkpoint = snapshot(config, model, params, velocity, rng, total_steps);
    if (write) {
        save_checkpoint(out.checkpoint, out_dir / "checkpoint.ckpt");
        atomic_write(out_dir / "train_log.jsonl", log_text);
    }
    return out;
}

objective::Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
    const RunConfig config = config_from_json(ckpt.config_json);
    auto model = objective::init_model<float>(config.model, config.objective, config.seed);
    restore_model(ckpt, model);
    return model;
}

}  // namespace uniat::cli
