#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdlpgc/errors.hpp"
#include "sdlpgc/experiment.hpp"

namespace fs = std::filesystem;
namespace ex = sdlpgc::experiment;

namespace {

struct ConfigArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;

    ex::ExperimentConfig load() const { return ex::ExperimentConfig::load(config, overrides); }
    std::optional<fs::path> out_dir() const { return out.empty() ? std::nullopt : std::optional<fs::path>(out); }
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-c,--config", args.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides, "Override a config field, e.g. --set model.blocks=3");
    cmd->add_option("-o,--out", args.out, "Output directory (default: a fresh run directory under output_dir)");
}

void print_report(const sdlpgc::MetricsReport& r, const std::string& label) {
    std::cout << label << '\n' << r.to_csv();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sea surface temperature forecasting on learned static and dynamic graphs"};
    app.require_subcommand(1);

    std::string descriptor, cache, missing = "reject";
    auto* prepare = app.add_subcommand("prepare", "Validate a dataset and cache normalized splits");
    prepare->add_option("-d,--dataset", descriptor, "Dataset descriptor (JSON)")->required();
    prepare->add_option("--cache", cache, std::string("Cache root (default: $") + ex::kCacheEnv + ")");
    prepare->add_option("--missing", missing, "Missing value policy")->check(CLI::IsMember({"reject", "interpolate"}));

    ConfigArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    add_config_args(train, train_args);

    ConfigArgs eval_args;
    std::string eval_ckpt, split = "test";
    auto* evaluate = app.add_subcommand("evaluate", "Metrics at horizons 3/6/9/12 for a checkpoint");
    add_config_args(evaluate, eval_args);
    evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
    evaluate->add_option("--split", split, "Partition to score")->check(CLI::IsMember({"train", "val", "test"}));

    ConfigArgs fc_args;
    std::string fc_ckpt;
    auto* forecast = app.add_subcommand("forecast", "Forecast the days after the end of the dataset");
    add_config_args(forecast, fc_args);
    forecast->add_option("--checkpoint", fc_ckpt, "Checkpoint directory")->required();

    ConfigArgs abl_args;
    auto* ablation = app.add_subcommand("ablation", "Train and score every model variant");
    add_config_args(ablation, abl_args);

    ConfigArgs graph_args;
    std::string graph_ckpt;
    std::size_t window = 0;
    auto* graphs = app.add_subcommand("export-graphs", "Write the learned adjacency matrices");
    add_config_args(graphs, graph_args);
    graphs->add_option("--checkpoint", graph_ckpt, "Checkpoint directory")->required();
    graphs->add_option("--window", window, "Test window whose dynamic graph is exported");

    std::vector<std::string> plot_inputs;
    std::string plot_out;
    auto* plot = app.add_subcommand("plot", "Render logs, metrics and adjacency CSVs as SVG");
    plot->add_option("inputs", plot_inputs, "train_log.jsonl, metrics JSON or adjacency CSV files")->required();
    plot->add_option("-o,--out", plot_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*prepare) {
            sdlpgc::data::LoadOptions options;
            options.missing = missing == "reject" ? sdlpgc::data::MissingPolicy::reject
                                                  : sdlpgc::data::MissingPolicy::interpolate;
            const auto s = ex::cmd_prepare(descriptor, cache.empty() ? ex::cache_root() : fs::path(cache), options);
            std::cout << "dataset " << s.dataset << ": T=" << s.steps << " N=" << s.nodes << " (" << s.first_date
                      << " .. " << s.last_date << ")\n"
                      << "split train/val/test = " << s.lengths.train << '/' << s.lengths.val << '/' << s.lengths.test
                      << "\nmean " << s.norm.mean << " std " << s.norm.std << "\ncache " << s.cache_dir.string()
                      << " hash " << s.cache_hash << '\n';
        } else if (*train) {
            const auto out = ex::cmd_train(train_args.load(), train_args.out_dir());
            std::cout << "best epoch " << out.result.best_epoch << " val MAE " << out.result.best_val_mae << '\n';
            print_report(out.val_metrics, "validation metrics");
            std::cout << "run directory " << out.run_dir.string() << '\n';
        } else if (*evaluate) {
            const auto out = ex::cmd_evaluate(eval_ckpt, eval_args.load(), ex::parse_split(split), eval_args.out_dir());
            print_report(out.model, "model");
            print_report(out.persistence, "persistence");
            std::cout << "run directory " << out.run_dir.string() << '\n';
        } else if (*forecast) {
            std::cout << ex::cmd_forecast(fc_ckpt, fc_args.load(), fc_args.out_dir()).string() << '\n';
        } else if (*ablation) {
            const auto out = ex::cmd_ablation(abl_args.load(), abl_args.out_dir());
            std::cout << out.table.to_text() << "run directory " << out.run_dir.string() << '\n';
        } else if (*graphs) {
            const auto out = ex::cmd_export_graphs(graph_ckpt, graph_args.load(), window, graph_args.out_dir());
            std::cout << "run directory " << out.run_dir.string() << '\n';
        } else if (*plot) {
            std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
            for (const auto& p : ex::cmd_plot(inputs, plot_out)) std::cout << p.string() << '\n';
        }
    } catch (const sdlpgc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const sdlpgc::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 1;
    } catch (const sdlpgc::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
