// SPDX-License-Identifier: Apache-2.0

#include "uniat/cli/config.hpp"

#include <cmath>
#include <json.hpp>
#include <numbers>
#include <set>

#include "uniat/core/error.hpp"
#include "uniat/core/io.hpp"

namespace uniat::cli {

using nlohmann::ordered_json;

namespace {

const char* attribute_order_name(moae::AttributeOrder o) {
    return o == moae::AttributeOrder::moment_inner ? "moment_inner" : "interval_inner";
}

moae::AttributeOrder parse_attribute_order(const std::string& s) {
    if (s == "moment_inner") return moae::AttributeOrder::moment_inner;
    if (s == "interval_inner") return moae::AttributeOrder::interval_inner;
    throw ValidationError("config: unknown attribute_order '" + s + "'");
}

// Reads the keys of `j` into fields through `visit`, rejecting unknown keys.
class Reader {
public:
    Reader(const ordered_json& j, std::string section) : j_(j), section_(std::move(section)) {
        if (!j_.is_object()) throw ValidationError("config: '" + section_ + "' must be an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ValidationError("config: unknown key '" + section_ + "." + key + "'");
    }
    template <typename V>
    void get(const char* key, V& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<V>();
        } catch (const nlohmann::json::exception&) {
            throw ValidationError("config: bad value for '" + section_ + "." + key + "'");
        }
    }
    const ordered_json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

private:
    const ordered_json& j_;
    std::string section_;
    std::set<std::string> seen_;
};

ordered_json model_json(const backbone::ModelConfig& m) {
    return {{"image_height", m.image_height},
            {"image_width", m.image_width},
            {"channels", m.channels},
            {"patch_size", m.patch_size},
            {"embed_dim", m.embed_dim},
            {"num_layers", m.num_layers},
            {"num_heads", m.num_heads},
            {"ffn_hidden", m.ffn_hidden},
            {"experts_per_scenario", m.experts_per_scenario},
            {"top_k", m.top_k},
            {"use_moae", m.use_moae},
            {"shared_token", m.shared_token},
            {"isolate_cls", m.isolate_cls},
            {"attribute_order", attribute_order_name(m.attribute_order)},
            {"init_std", m.init_std}};
}

void read_model(const ordered_json& j, backbone::ModelConfig& m) {
    Reader r(j, "model");
    r.get("image_height", m.image_height);
    r.get("image_width", m.image_width);
    r.get("channels", m.channels);
    r.get("patch_size", m.patch_size);
    r.get("embed_dim", m.embed_dim);
    r.get("num_layers", m.num_layers);
    r.get("num_heads", m.num_heads);
    r.get("ffn_hidden", m.ffn_hidden);
    r.get("experts_per_scenario", m.experts_per_scenario);
    r.get("top_k", m.top_k);
    r.get("use_moae", m.use_moae);
    r.get("shared_token", m.shared_token);
    r.get("isolate_cls", m.isolate_cls);
    std::string order = attribute_order_name(m.attribute_order);
    r.get("attribute_order", order);
    m.attribute_order = parse_attribute_order(order);
    r.get("init_std", m.init_std);
}

ordered_json objective_json(const objective::ObjectiveConfig& o) {
    return {{"scenario_loss", o.scenario_loss}, {"hdw", o.hdw},
            {"hdw_exponent", o.hdw_exponent},   {"bn_momentum", o.bn_momentum},
            {"bn_eps", o.bn_eps},               {"num_persons", o.num_persons},
            {"num_clothes", o.num_clothes}};
}

void read_objective(const ordered_json& j, objective::ObjectiveConfig& o) {
    Reader r(j, "objective");
    r.get("scenario_loss", o.scenario_loss);
    r.get("hdw", o.hdw);
    r.get("hdw_exponent", o.hdw_exponent);
    r.get("bn_momentum", o.bn_momentum);
    r.get("bn_eps", o.bn_eps);
    r.get("num_persons", o.num_persons);
    r.get("num_clothes", o.num_clothes);
}

ordered_json optimizer_json(const OptimizerConfig& o) {
    return {{"lr", o.lr},
            {"momentum", o.momentum},
            {"weight_decay", o.weight_decay},
            {"warmup_fraction", o.warmup_fraction},
            {"steps", o.steps},
            {"epochs", o.epochs},
            {"persons_per_batch", o.persons_per_batch},
            {"instances_per_person", o.instances_per_person},
            {"checkpoint_every", o.checkpoint_every}};
}

void read_optimizer(const ordered_json& j, OptimizerConfig& o) {
    Reader r(j, "optimizer");
    r.get("lr", o.lr);
    r.get("momentum", o.momentum);
    r.get("weight_decay", o.weight_decay);
    r.get("warmup_fraction", o.warmup_fraction);
    r.get("steps", o.steps);
    r.get("epochs", o.epochs);
    r.get("persons_per_batch", o.persons_per_batch);
    r.get("instances_per_person", o.instances_per_person);
    r.get("checkpoint_every", o.checkpoint_every);
}

ordered_json synthetic_json(const data::SyntheticGenConfig& g) {
    return {{"num_train_ids", g.num_train_ids},
            {"num_test_ids", g.num_test_ids},
            {"clothes_min", g.clothes_min},
            {"clothes_max", g.clothes_max},
            {"num_rgb_cameras", g.num_rgb_cameras},
            {"num_ir_cameras", g.num_ir_cameras},
            {"images_per_cell", g.images_per_cell},
            {"cross_modality_prob", g.cross_modality_prob},
            {"body_dim", g.body_dim},
            {"clothes_dim", g.clothes_dim},
            {"noise", g.noise},
            {"image_height", g.image_height},
            {"image_width", g.image_width},
            {"seed", g.seed}};
}

void read_synthetic(const ordered_json& j, data::SyntheticGenConfig& g) {
    Reader r(j, "data.synthetic");
    r.get("num_train_ids", g.num_train_ids);
    r.get("num_test_ids", g.num_test_ids);
    r.get("clothes_min", g.clothes_min);
    r.get("clothes_max", g.clothes_max);
    r.get("num_rgb_cameras", g.num_rgb_cameras);
    r.get("num_ir_cameras", g.num_ir_cameras);
    r.get("images_per_cell", g.images_per_cell);
    r.get("cross_modality_prob", g.cross_modality_prob);
    r.get("body_dim", g.body_dim);
    r.get("clothes_dim", g.clothes_dim);
    r.get("noise", g.noise);
    r.get("image_height", g.image_height);
    r.get("image_width", g.image_width);
    r.get("seed", g.seed);
}

}  // namespace

std::size_t OptimizerConfig::total_steps(std::size_t train_records) const {
    if (epochs == 0) return steps;
    const std::size_t b = batch_size();
    return epochs * std::max<std::size_t>(1, (train_records + b - 1) / b);
}

std::size_t OptimizerConfig::warmup_steps(std::size_t total) const {
    return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total)));
}

double scheduled_lr(const OptimizerConfig& opt, std::size_t step, std::size_t total) {
    const std::size_t warm = opt.warmup_steps(total);
    if (step < warm) return opt.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    const std::size_t span = total - warm;
    if (span == 0) return 0.0;
    const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
    return 0.5 * opt.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void RunConfig::validate() const {
    model.validate();
    const auto& o = optimizer;
    if (!(o.lr >= 0) || !std::isfinite(o.lr)) throw ValidationError("config: lr must be a finite value >= 0");
    if (!(o.momentum >= 0 && o.momentum < 1)) throw ValidationError("config: momentum must be in [0, 1)");
    if (!(o.weight_decay >= 0)) throw ValidationError("config: weight_decay must be >= 0");
    if (!(o.warmup_fraction >= 0 && o.warmup_fraction <= 1))
        throw ValidationError("config: warmup_fraction must be in [0, 1]");
    if (o.steps == 0 && o.epochs == 0) throw ValidationError("config: steps and epochs are both zero");
    if (o.persons_per_batch == 0 || o.instances_per_person == 0)
        throw ValidationError("config: batch needs at least one person and one instance");
    if (model.shared_token && (objective.scenario_loss || objective.hdw))
        throw ValidationError("config: a shared token supports neither scenario loss nor HDW");
    if (!data.manifest.empty()) return;
    if (model.image_height != data.synthetic.image_height || model.image_width != data.synthetic.image_width)
        throw ValidationError("config: model and synthetic image sizes differ");
    data.synthetic.validate();
}

RunConfig preset(std::string_view name) {
    RunConfig c;
    if (name == "desk") return c;
    if (name == "full-scale") {
        c.optimizer.lr = 0.008;
        c.optimizer.epochs = 120;
        return c;
    }
    if (name == "small") {
        c.model.embed_dim = 32;
        c.model.num_layers = 2;
        c.model.num_heads = 2;
        c.model.ffn_hidden = 64;
        c.optimizer.steps = 800;
        c.optimizer.persons_per_batch = 8;
        c.optimizer.instances_per_person = 4;
        return c;
    }
    if (name == "bench") {
        c.model.embed_dim = 48;
        c.model.num_layers = 3;
        c.model.num_heads = 4;
        c.model.ffn_hidden = 96;
        c.optimizer.steps = 1500;
        c.optimizer.persons_per_batch = 8;
        c.optimizer.instances_per_person = 4;
        return c;
    }
    throw ValidationError("config: unknown preset '" + std::string(name) + "'");
}

void apply_variant(RunConfig& c, std::string_view variant) {
    if (variant == "full") {
        c.model.shared_token = false;
        c.model.use_moae = true;
        c.objective.scenario_loss = true;
        c.objective.hdw = true;
    } else if (variant == "baseline") {
        c.model.shared_token = true;
        c.model.use_moae = false;
        c.objective.scenario_loss = false;
        c.objective.hdw = false;
    } else {
        throw ValidationError("config: unknown variant '" + std::string(variant) + "'");
    }
}

std::string to_json(const RunConfig& c) {
    ordered_json j;
    j["model"] = model_json(c.model);
    j["objective"] = objective_json(c.objective);
    j["optimizer"] = optimizer_json(c.optimizer);
    j["data"] = {{"manifest", c.data.manifest},
                 {"synthetic", synthetic_json(c.data.synthetic)},
                 {"augment",
                  {{"flip", c.data.augment.flip}, {"pad_crop", c.data.augment.pad_crop}, {"erase", c.data.augment.erase}}}};
    j["protocol"] = {{"lt_exclude_same_camera", c.protocol.lt_exclude_same_camera}};
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["deterministic"] = c.deterministic;
    return j.dump(2) + "\n";
}

RunConfig config_from_json(std::string_view text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    std::string preset_name = "desk";
    RunConfig c;
    {
        Reader r(j, "config");
        r.get("preset", preset_name);
        c = preset(preset_name);
        if (auto* s = r.sub("model")) read_model(*s, c.model);
        if (auto* s = r.sub("objective")) read_objective(*s, c.objective);
        if (auto* s = r.sub("optimizer")) read_optimizer(*s, c.optimizer);
        if (auto* s = r.sub("data")) {
            Reader d(*s, "data");
            d.get("manifest", c.data.manifest);
            if (auto* g = d.sub("synthetic")) read_synthetic(*g, c.data.synthetic);
            if (auto* a = d.sub("augment")) {
                Reader ar(*a, "data.augment");
                ar.get("flip", c.data.augment.flip);
                ar.get("pad_crop", c.data.augment.pad_crop);
                ar.get("erase", c.data.augment.erase);
            }
        }
        if (auto* s = r.sub("protocol")) {
            Reader p(*s, "protocol");
            p.get("lt_exclude_same_camera", c.protocol.lt_exclude_same_camera);
        }
        std::string variant;
        r.get("variant", variant);
        if (!variant.empty()) apply_variant(c, variant);
        r.get("seed", c.seed);
        r.get("out", c.out);
        r.get("deterministic", c.deterministic);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) { return config_from_json(read_text(path)); }

}  // namespace uniat::cli
