#pragma once

#include "pearl/expcli/config.hpp"
#include "pearl/expcli/plot.hpp"
#include "pearl/expcli/presets.hpp"
#include "pearl/metaloop/checkpoint.hpp"
#include "pearl/metaloop/trainer.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pearl::expcli {

namespace fs = std::filesystem;

inline constexpr const char* kOutEnv = "PEARL_LAB_OUT";
inline constexpr const char* kConfigFile = "config.ini";
inline constexpr const char* kSeedsFile = "seeds.json";
inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

/// `--out` names the run directory itself. Otherwise the run lands in
/// `<root>/<label>-seed<N>`, where root is $PEARL_LAB_OUT if set, else the
/// config's output_dir.
inline fs::path resolve_run_dir(const ExperimentConfig& cfg, const std::optional<std::string>& out,
                                const std::string& label) {
    if (out) return fs::path(*out);
    fs::path root = cfg.output_dir;
    if (const char* env = std::getenv(kOutEnv); env && *env) root = env;
    return root / (label + "-seed" + std::to_string(cfg.train.seed));
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline nlohmann::json seeds_record(const ExperimentConfig& cfg) {
    return {{"seed", cfg.train.seed},
            {"task_seed", cfg.train.task_seed},
            {"streams", {{"init", 1}, {"collect", 2}, {"rl_batch", 3}, {"context", 4}, {"noise", 5}, {"eval", 6}}}};
}

struct TrainResult {
    fs::path run_dir;
    EvalResult final_eval;
    std::uint64_t env_steps = 0;
    std::uint64_t optimizer_steps = 0;
};

/// Meta-trains under `cfg`, writing the resolved config, seeds, metrics and
/// checkpoints into `run_dir`.
inline TrainResult run_training(const ExperimentConfig& cfg, const fs::path& run_dir, std::ostream& progress) {
    fs::create_directories(run_dir);
    const std::string config_text = serialize(cfg);
    write_text(run_dir / kConfigFile, config_text);
    write_text(run_dir / kSeedsFile, seeds_record(cfg).dump(2) + "\n");

    std::ofstream metrics(run_dir / kMetricsFile, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write " + (run_dir / kMetricsFile).string());
    MetricsLog log(&metrics);

    MetaTrainer trainer(cfg.train);
    TrainResult result;
    result.run_dir = run_dir;
    progress << "training " << to_string(cfg.train.family) << " seed " << cfg.train.seed << " -> " << run_dir.string()
             << '\n';
    trainer.run(log, [&](MetaTrainer& t, const EvalResult* eval) {
        progress << "iter " << t.iteration() << " env_steps " << t.env_steps() << " opt_steps " << t.optimizer_steps();
        if (eval) {
            progress << " eval_return " << eval->protocol_return;
            result.final_eval = *eval;
        }
        progress << '\n';
        if (cfg.checkpoint_every > 0 && t.iteration() % cfg.checkpoint_every == 0) {
            make_checkpoint(t, config_text)
                .write_file((run_dir / ("checkpoint-iter" + std::to_string(t.iteration()) + ".bin")).string());
        }
    });
    make_checkpoint(trainer, config_text).write_file((run_dir / kCheckpointFile).string());
    result.env_steps = trainer.env_steps();
    result.optimizer_steps = trainer.optimizer_steps();
    progress << "done: env_steps " << result.env_steps << " final eval_return " << result.final_eval.protocol_return
             << '\n';
    return result;
}

/// Rebuilds a trainer from a checkpoint's embedded config and state.
inline std::unique_ptr<MetaTrainer> load_trainer(const std::string& checkpoint_path, ExperimentConfig* cfg_out = nullptr) {
    const Checkpoint cp = Checkpoint::read_file(checkpoint_path);
    ExperimentConfig cfg = parse(cp.config_text, checkpoint_path + "#config");
    auto trainer = std::make_unique<MetaTrainer>(cfg.train);
    restore_checkpoint(*trainer, cp);
    if (cfg_out) *cfg_out = cfg;
    return trainer;
}

struct EvalOptions {
    std::size_t episodes = 3;
    Split split = Split::test;
    std::optional<std::uint64_t> seed;  ///< reseeds evaluation; otherwise the checkpointed stream continues
};

/// Meta-tests every task of the chosen split and writes one record per
/// adaptation trace plus a final aggregate record.
inline EvalResult run_eval(const std::string& checkpoint_path, const EvalOptions& opts, const fs::path& out_file,
                           std::ostream& progress) {
    auto trainer = load_trainer(checkpoint_path);
    const auto& tasks = opts.split == Split::test ? trainer->tasks().test : trainer->tasks().train;
    std::mt19937_64& rng = trainer->rngs().eval;
    if (opts.seed) rng = RngStreams(*opts.seed).eval;
    const EvalResult r =
        evaluate_protocol(trainer->agent(), tasks, opts.episodes, rng, trainer->config().eval_rollouts);

    if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
    std::ofstream out(out_file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_file.string());
    MetricsLog log(&out);
    for (std::size_t i = 0; i < r.traces.size(); ++i) {
        const auto& t = r.traces[i];
        nlohmann::json row{{"type", "trace"},
                           {"task_id", t.task_id},
                           {"rollout", i / tasks.size()},
                           {"returns", t.returns},
                           {"context_size", t.context_sizes},
                           {"posterior_mean", nlohmann::json::array()},
                           {"posterior_var", nlohmann::json::array()}};
        for (const auto& q : t.posteriors) {
            row["posterior_mean"].push_back(q.mean);
            row["posterior_var"].push_back(q.var);
        }
        log.write(row);
        progress << "task " << t.task_id << " returns";
        for (double x : t.returns) progress << ' ' << x;
        progress << '\n';
    }
    log.write({{"type", "aggregate"},
               {"split", to_string(opts.split)},
               {"episodes", opts.episodes},
               {"protocol_return", r.protocol_return},
               {"episode_returns", r.mean_episode_returns},
               {"posterior_var", r.mean_posterior_var}});
    progress << "protocol return (episode 3): " << r.protocol_return << '\n';
    return r;
}

/// `label:path` assigns a curve label; bare paths share the label "run".
inline std::pair<std::string, std::string> split_labelled_path(const std::string& arg) {
    const auto colon = arg.find(':');
    if (colon == std::string::npos || colon == 0) return {"run", arg};
    return {arg.substr(0, colon), arg.substr(colon + 1)};
}

struct PlotResult {
    std::vector<CurveGroup> groups;
    std::vector<SummaryRow> summary;
    fs::path image;
    fs::path table;
};

/// Writes the chart to `image` and the summary table beside it (.csv).
inline PlotResult run_plot(const std::vector<std::string>& inputs, const fs::path& image,
                           std::optional<double> threshold = std::nullopt, const std::string& title = "") {
    if (inputs.empty()) throw std::invalid_argument("plot needs at least one metrics file");
    std::vector<std::string> order;
    std::map<std::string, std::vector<RunCurve>> by_label;
    for (const auto& arg : inputs) {
        auto [label, path] = split_labelled_path(arg);
        if (!by_label.count(label)) order.push_back(label);
        by_label[label].push_back(read_eval_curve(path));
    }
    PlotResult r;
    for (const auto& label : order) r.groups.push_back(reduce_group(label, std::move(by_label[label])));
    r.summary = summarize(r.groups, threshold);
    r.image = image;
    r.table = fs::path(image).replace_extension(".csv");
    if (image.has_parent_path()) fs::create_directories(image.parent_path());
    write_text(r.image, render_svg(r.groups, title));
    write_text(r.table, summary_csv(r.summary));
    return r;
}

}  // namespace pearl::expcli
