// pearl_lab: train, evaluate, ablate and plot PEARL meta-RL experiments.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "pearl/expcli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace pearl;
using namespace pearl::expcli;

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct TrainArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

int train(const TrainArgs& a, std::optional<Preset> preset) {
    ExperimentConfig cfg = load(a.config);
    if (a.seed) cfg.train.seed = *a.seed;
    std::string label = fs::path(a.config).stem().string();
    if (preset) {
        cfg = apply_preset(cfg, *preset);
        label += std::string("-") + to_string(*preset);
    }
    cfg.train.validate();
    run_training(cfg, resolve_run_dir(cfg, a.out, label), std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PEARL meta-RL experiments"};
    app.require_subcommand(1);

    TrainArgs targs;
    auto* train_cmd = app.add_subcommand("train", "Meta-train from a config file");
    train_cmd->add_option("--config", targs.config, "Experiment config")->required();
    train_cmd->add_option("--seed", targs.seed, "Override the run seed");
    train_cmd->add_option("--out", targs.out, "Run directory");

    TrainArgs aargs;
    std::string preset_name;
    std::vector<std::string> preset_choices;
    for (const auto& [p, n] : preset_names()) preset_choices.emplace_back(n);
    auto* ablate_cmd = app.add_subcommand("ablate", "Meta-train a base config with an ablation preset applied");
    ablate_cmd->add_option("--preset", preset_name, "Ablation preset")->required()->check(CLI::IsMember(preset_choices));
    ablate_cmd->add_option("--config", aargs.config, "Base experiment config")->required();
    ablate_cmd->add_option("--seed", aargs.seed, "Override the run seed");
    ablate_cmd->add_option("--out", aargs.out, "Run directory");

    std::string checkpoint;
    EvalOptions eopts;
    std::string split_name = "test";
    std::optional<std::string> eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "Meta-test a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--episodes", eopts.episodes, "Episodes per task (>= 3)")->capture_default_str();
    eval_cmd->add_option("--split", split_name, "Task split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
    eval_cmd->add_option("--seed", eopts.seed, "Reseed evaluation");
    eval_cmd->add_option("--out", eval_out, "Trace file (default: eval-<split>.jsonl beside the checkpoint)");

    std::vector<std::string> metrics_files;
    std::string image = "plot.svg";
    std::optional<double> threshold;
    std::string title;
    auto* plot_cmd = app.add_subcommand("plot", "Plot return against environment steps");
    plot_cmd->add_option("metrics", metrics_files, "Metrics files, optionally prefixed with 'label:'")->required();
    plot_cmd->add_option("--out", image, "Image path; the summary table is written beside it")->capture_default_str();
    plot_cmd->add_option("--threshold", threshold, "Return threshold for the summary table");
    plot_cmd->add_option("--title", title, "Chart title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kUsage;
    }

    try {
        if (*train_cmd) return train(targs, std::nullopt);
        if (*ablate_cmd) return train(aargs, preset_from_string(preset_name));
        if (*eval_cmd) {
            eopts.split = split_from_string(split_name);
            if (eopts.episodes < 3) {
                std::cerr << "error: --episodes must be at least 3\n";
                return kUsage;
            }
            const fs::path out = eval_out ? fs::path(*eval_out)
                                          : fs::path(checkpoint).parent_path() / ("eval-" + split_name + ".jsonl");
            run_eval(checkpoint, eopts, out, std::cout);
            return 0;
        }
        if (*plot_cmd) {
            PlotResult r = run_plot(metrics_files, image, threshold, title);
            std::cout << "wrote " << r.image.string() << " and " << r.table.string() << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
