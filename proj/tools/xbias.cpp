#include <algorithm>
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "xbias/annotation/server.hpp"
#include "xbias/dataset/manifest.hpp"
#include "xbias/dataset/synthetic.hpp"
#include "xbias/experiment/config.hpp"
#include "xbias/experiment/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace xbias;

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

experiment::ExperimentConfig config_with_overrides(const std::string& path, std::vector<std::string> sets) {
    if (path.empty()) return experiment::parse_config("", sets);
    return experiment::load_config(path, sets);
}

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

int report_status(const experiment::RunStatus& status, const fs::path& store) {
    for (const auto& r : status.ratios) {
        if (r.state == "failed") {
            std::cout << fmt::format("{:>5}  failed at {}: {}\n", r.ratio, r.failed_stage, r.error);
        } else {
            std::cout << fmt::format("{:>5}  {}\n", r.ratio, r.state);
        }
    }
    if (status.any_pending()) {
        std::cout << fmt::format("annotation pending; serve with: xbias annotate serve --store {}\n", store.string());
    }
    return status.any_failed() ? kExitStage : 0;
}

annotation::AnnotationServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explanation-based fairness audits of image classifiers"};
    app.require_subcommand(1);

    auto* ds_cmd = app.add_subcommand("dataset", "Generate or validate datasets");
    ds_cmd->require_subcommand(1);

    std::string gen_config, gen_out;
    std::vector<std::string> gen_sets;
    std::uint64_t gen_seed = 0;
    auto* gen = ds_cmd->add_subcommand("gen", "Write the synthetic benchmark to a directory");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--config", gen_config, "experiment config (dataset section is used)");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--set", gen_sets, "override, section.key=value");

    std::string imp_root, imp_manifest;
    auto* imp = ds_cmd->add_subcommand("import", "Validate a dataset manifest and its files");
    imp->add_option("--root", imp_root, "dataset root")->required();
    imp->add_option("--manifest", imp_manifest, "manifest file (default <root>/manifest.json)");

    std::string run_config, run_out, run_until = "report";
    std::uint64_t run_seed = 0;
    std::vector<std::string> run_sets;
    auto* run = app.add_subcommand("run", "Run a full experiment into a new results store");
    run->add_option("--config", run_config, "experiment config")->required();
    run->add_option("--seed", run_seed, "master seed")->required();
    run->add_option("--out", run_out, "results store directory")->required();
    run->add_option("--set", run_sets, "override, section.key=value");
    run->add_option("--stage", run_until, "last per-ratio stage to run");

    std::string res_store, res_config, res_until = "report";
    auto* resume = app.add_subcommand("resume", "Continue an existing results store");
    resume->add_option("--store", res_store, "results store directory")->required();
    resume->add_option("--config", res_config, "config to check against the stored one");
    resume->add_option("--stage", res_until, "last per-ratio stage to run");

    std::string srv_store, srv_host = "127.0.0.1", srv_ui;
    int srv_port = 8080;
    auto* annotate = app.add_subcommand("annotate", "Human review of explanations");
    annotate->require_subcommand(1);
    auto* serve = annotate->add_subcommand("serve", "Serve annotation sessions over HTTP");
    serve->add_option("--store", srv_store, "results store directory")->required();
    serve->add_option("--host", srv_host, "bind address");
    serve->add_option("--port", srv_port, "port");
    serve->add_option("--ui-dir", srv_ui, "static UI directory mounted at /");

    std::string rep_store;
    auto* report = app.add_subcommand("report", "Render summary tables of a results store");
    report->add_option("--store", rep_store, "results store directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen) {
            gen_sets.push_back(fmt::format("experiment.seed={}", gen_seed));
            const auto cfg = config_with_overrides(gen_config, gen_sets);
            if (cfg.dataset_source != "synthetic") throw ConfigError("dataset gen needs dataset.source = synthetic");
            if (fs::exists(gen_out) && !fs::is_empty(gen_out)) {
                throw ConfigError(gen_out + " is not empty");
            }
            auto ds = dataset::generate_synthetic_dataset(cfg.synthetic);
            const auto manifest = dataset::export_dataset(ds, gen_out);
            std::cout << fmt::format("{} samples written; manifest {}\n", ds.samples.size(), manifest.string());
        } else if (*imp) {
            const fs::path manifest = imp_manifest.empty() ? fs::path(imp_root) / "manifest.json" : fs::path(imp_manifest);
            const auto result = dataset::import_dataset(imp_root, manifest);
            for (const auto& w : result.warnings) std::cout << "warning: " << w << "\n";
            for (const auto& [key, n] : result.dataset.subgroup_counts()) {
                std::cout << fmt::format("{:>6}  {}\n", n, result.dataset.subgroup_label(key));
            }
            std::cout << fmt::format("{} samples, {} without masks\n", result.dataset.samples.size(),
                                     result.maskless_ids.size());
        } else if (*run) {
            run_sets.push_back(fmt::format("experiment.seed={}", run_seed));
            run_sets.push_back("experiment.output=" + run_out);
            const auto cfg = experiment::load_config(run_config, run_sets);
            const auto status = experiment::run_experiment(cfg, {run_until, log_line});
            return report_status(status, run_out);
        } else if (*resume) {
            std::optional<experiment::ExperimentConfig> edited;
            if (!res_config.empty()) {
                const auto stored = experiment::stored_config(res_store);
                edited = experiment::load_config(
                    res_config, {fmt::format("experiment.seed={}", stored.seed), "experiment.output=" + res_store});
            }
            const auto status = experiment::resume_experiment(res_store, edited, {res_until, log_line});
            return report_status(status, res_store);
        } else if (*serve) {
            annotation::AnnotationServer server(srv_store, srv_ui);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << fmt::format("serving {} on http://{}:{}/\n", srv_store, srv_host, srv_port) << std::flush;
            if (!server.listen(srv_host, srv_port)) {
                std::cerr << fmt::format("cannot bind {}:{}\n", srv_host, srv_port);
                return kExitConfig;
            }
        } else if (*report) {
            experiment::render_tables(rep_store);
            std::vector<fs::path> tables;
            for (const auto& entry : fs::directory_iterator(fs::path(rep_store) / "tables")) {
                if (entry.path().extension() == ".md") tables.push_back(entry.path());
            }
            std::sort(tables.begin(), tables.end());
            for (const auto& t : tables) {
                std::cout << "## " << t.stem().string() << "\n\n" << dataset::read_text_file(t) << "\n";
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const experiment::StoreError& e) {
        std::cerr << "store error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return 0;
}
