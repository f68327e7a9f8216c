// SPDX-License-Identifier: Apache-2.0

#include "uniat/cli/commands.hpp"

#include <CLI11.hpp>
#include <ostream>

#include "uniat/cli/train.hpp"
#include "uniat/core/error.hpp"
#include "uniat/core/io.hpp"
#include "uniat/data/synthetic.hpp"
#include "uniat/eval/evaluate.hpp"

#ifndef UNIAT_GIT_VERSION
#define UNIAT_GIT_VERSION "unknown"
#endif

namespace uniat::cli {

namespace fs = std::filesystem;

namespace {

data::DatasetManifest manifest_for(const RunConfig& config) {
    if (!config.data.manifest.empty()) {
        auto m = data::load_manifest(config.data.manifest);
        m.validate();
        return m;
    }
    return data::generate_synthetic(config.data.synthetic);
}

}  // namespace

std::string code_version() { return UNIAT_GIT_VERSION; }

fs::path cmd_gen_data(const RunConfig& config, const fs::path& out_dir) {
    config.data.synthetic.validate();
    fs::create_directories(out_dir);
    const auto manifest = data::generate_synthetic(config.data.synthetic);
    const fs::path path = out_dir / "manifest.jsonl";
    data::save_manifest(manifest, path);
    atomic_write(out_dir / "manifest.digest", data::manifest_digest(manifest) + "\n");
    return path;
}

fs::path cmd_train(const RunConfig& config, const fs::path& out_dir, std::ostream* progress) {
    config.validate();
    fs::create_directories(out_dir);
    RunConfig run = config;
    data::DatasetManifest manifest;
    if (run.data.manifest.empty()) {
        manifest = data::generate_synthetic(run.data.synthetic);
        data::save_manifest(manifest, out_dir / "data" / "manifest.jsonl");
    } else {
        manifest = manifest_for(run);
    }
    run = resolve_config(run, manifest);
    atomic_write(out_dir / "config.json", to_json(run));
    atomic_write(out_dir / "manifest_digest.txt", data::manifest_digest(manifest) + "\n");
    atomic_write(out_dir / "version.txt", code_version() + "\n");
    train(run, manifest, out_dir, progress);
    return out_dir / "checkpoint.ckpt";
}

eval::MetricsReport cmd_eval(const EvalRequest& request) {
    if (request.scenarios.empty()) throw UsageError("eval: no scenarios requested");
    const Checkpoint ckpt = load_checkpoint(request.checkpoint);
    const auto model = model_from_checkpoint(ckpt);
    data::DatasetManifest manifest;
    if (!request.manifest.empty()) {
        manifest = data::load_manifest(request.manifest);
        manifest.validate();
    } else {
        manifest = manifest_for(config_from_json(ckpt.config_json));
    }
    const RunConfig config = config_from_json(ckpt.config_json);
    const std::size_t workers = request.deterministic ? 1 : eval::env_workers();
    auto report = eval::evaluate(model, manifest, request.scenarios, config.protocol, workers);
    const fs::path dir = request.out_dir.empty() ? request.checkpoint.parent_path() : request.out_dir;
    if (!dir.empty()) fs::create_directories(dir);
    atomic_write(dir / "metrics.json", eval::to_json(report));
    atomic_write(dir / "metrics.csv", eval::to_csv(report));
    return report;
}

std::string cmd_export_metrics(const fs::path& metrics, const std::string& format) {
    const auto report = eval::report_from_json(read_text(metrics));
    if (format == "json") return eval::to_json(report);
    if (format == "csv") return eval::to_csv(report);
    if (format == "table") return eval::to_table(report);
    throw UsageError("export-metrics: unknown format '" + format + "'");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Anytime person re-identification: data, training, evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    std::string config_path, out_dir, scenarios = "all", checkpoint, manifest, fault, metrics, format = "table";
    std::uint64_t seed = 0;
    bool deterministic = false, eval_after = false, no_pipeline = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Seed override");
        sub->add_flag("--deterministic", deterministic, "Single worker, fixed seeds");
        sub->add_option("--out", out_dir, "Output directory");
    };
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
    add_common(gen);
    auto* tr = app.add_subcommand("train", "Train a model");
    add_common(tr);
    tr->add_option("--manifest", manifest, "Training manifest (overrides the config)");
    tr->add_flag("--eval", eval_after, "Evaluate all scenarios after training");
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("--manifest", manifest, "Evaluation manifest")->check(CLI::ExistingFile);
    ev->add_option("--scenarios", scenarios, "Comma-separated scenarios or 'all'");
    auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite");
    gc->add_option("--inject-fault", fault, "Corrupt the adjoint of one primitive");
    gc->add_flag("--no-pipeline", no_pipeline, "Skip the full-model check");
    auto* ex = app.add_subcommand("export-metrics", "Convert a metrics report");
    ex->add_option("--metrics", metrics, "metrics.json")->required()->check(CLI::ExistingFile);
    ex->add_option("--format", format, "json, csv or table");
    ex->add_option("--out", out_dir, "Output file (stdout if absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << code_version() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        auto load = [&](CLI::App* sub) {
            RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
            if (sub->count("--deterministic")) c.deterministic = true;
            if (sub->count("--out")) c.out = out_dir;
            return c;
        };
        if (gen->parsed()) {
            RunConfig c = load(gen);
            if (gen->count("--seed")) c.data.synthetic.seed = seed;
            const auto path = cmd_gen_data(c, c.out);
            out << "wrote " << path.string() << "\n";
        } else if (tr->parsed()) {
            RunConfig c = load(tr);
            if (tr->count("--seed")) c.seed = seed;
            if (!manifest.empty()) c.data.manifest = manifest;
            const auto ckpt = cmd_train(c, c.out, &out);
            out << "wrote " << ckpt.string() << "\n";
            if (eval_after) {
                EvalRequest req{ckpt, {}, {kAllScenarios.begin(), kAllScenarios.end()}, c.out, c.deterministic};
                out << eval::to_table(cmd_eval(req));
            }
        } else if (ev->parsed()) {
            EvalRequest req;
            req.checkpoint = checkpoint;
            req.manifest = manifest;
            req.scenarios = scenarios == "all" ? std::vector<Scenario>(kAllScenarios.begin(), kAllScenarios.end())
                                               : parse_scenario_list(scenarios);
            req.out_dir = out_dir;
            req.deterministic = deterministic;
            out << eval::to_table(cmd_eval(req));
        } else if (gc->parsed()) {
            GradSuiteOptions o;
            o.fault_op = fault;
            o.include_pipeline = !no_pipeline;
            const auto rows = run_grad_suite(o);
            out << format_grad_table(rows);
            for (const auto& r : rows)
                if (!r.passed) return kExitNumerical;
        } else if (ex->parsed()) {
            const auto text = cmd_export_metrics(metrics, format);
            if (out_dir.empty()) {
                out << text;
            } else {
                atomic_write(out_dir, text);
            }
        }
        return kExitOk;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

}  // namespace uniat::cli
