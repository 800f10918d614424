// disc: command-line front end for pretraining, refinement, evaluation,
// classical baselines and embedding export.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "disc/disc.hpp"

namespace {

struct Args {
    std::string config;
    std::string checkpoint;
    std::optional<std::uint64_t> seed;
    bool show_config = false;
    std::string space = "raw";
    std::string algo = "kmeans";
    std::string labels;
    std::optional<std::size_t> out_dim;
};

void add_common(CLI::App* cmd, Args& a, bool with_checkpoint) {
    cmd->add_option("--config", a.config, "experiment config file")->required();
    if (with_checkpoint) cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint");
    cmd->add_option("--seed", a.seed, "override the config seed");
    cmd->add_flag("--show-config", a.show_config, "print the effective config and exit");
}

int run(const std::string& command, const Args& a) {
    disc::ExperimentConfig cfg = disc::load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    const auto out = cfg.output_dir;
    auto checkpoint_or = [&](const char* fallback) {
        return a.checkpoint.empty() ? out / fallback : std::filesystem::path(a.checkpoint);
    };

    if (a.show_config) {
        std::cout << cfg.to_text();
        if (!a.checkpoint.empty()) {
            disc::Checkpoint ck = disc::load_checkpoint(a.checkpoint);
            std::cout << "# embedded in " << a.checkpoint << "\n" << ck.config_text;
        }
        return 0;
    }

    if (command == "pretrain") {
        auto s = disc::cmd_pretrain(cfg, std::cerr);
        std::cout << "wrote " << s.checkpoint.string() << '\n';
    } else if (command == "refine") {
        auto s = disc::cmd_refine(cfg, checkpoint_or(disc::kPretrainCheckpoint), std::cerr);
        std::cout << "refinement " << (s.converged ? "converged" : "stopped at the epoch cap") << " after "
                  << s.history.size() << " epochs\n";
    } else if (command == "evaluate") {
        auto labels = a.labels.empty() ? out / "labels.csv" : std::filesystem::path(a.labels);
        disc::print_reports(std::cout, disc::cmd_evaluate(cfg, labels, std::cerr));
    } else if (command == "baseline") {
        auto s = disc::cmd_baseline(cfg, disc::parse_space(a.space), disc::parse_algo(a.algo),
                                    checkpoint_or(disc::kPretrainCheckpoint), std::cerr);
        disc::print_reports(std::cout, s.reports);
    } else if (command == "export-embeddings") {
        std::filesystem::path ckpt = a.checkpoint;
        if (ckpt.empty()) {
            ckpt = std::filesystem::exists(out / disc::kRefinedCheckpoint) ? out / disc::kRefinedCheckpoint
                                                                            : out / disc::kPretrainCheckpoint;
        }
        std::optional<std::filesystem::path> labels;
        if (!a.labels.empty()) labels = a.labels;
        auto s = disc::cmd_export_embeddings(cfg, ckpt, a.out_dim.value_or(cfg.pca_dim), labels, std::cerr);
        std::cout << "wrote " << s.path.string() << " (" << s.rows << " rows, " << s.columns << " components)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DISC deep clustering for multi-channel time series"};
    app.require_subcommand(1);
    Args a;

    auto* pretrain = app.add_subcommand("pretrain", "train the autoencoder; writes model.ckpt, pretrain_loss.csv");
    add_common(pretrain, a, false);
    auto* refine = app.add_subcommand("refine", "initialize centroids and refine; writes model_refined.ckpt, labels.csv");
    add_common(refine, a, true);
    auto* evaluate = app.add_subcommand("evaluate", "score a labels file; writes report.csv");
    add_common(evaluate, a, false);
    evaluate->add_option("--labels", a.labels, "labels file (default <output_dir>/labels.csv)");
    auto* baseline = app.add_subcommand("baseline", "classical clustering on raw windows or embeddings");
    add_common(baseline, a, true);
    baseline->add_option("--space", a.space, "raw | embedding")->capture_default_str();
    baseline->add_option("--algo", a.algo, "kmeans | ac-average | ac-complete | ac-ward")->capture_default_str();
    auto* expo = app.add_subcommand("export-embeddings", "PCA-reduced embeddings as CSV; writes embeddings.csv");
    add_common(expo, a, true);
    expo->add_option("--out-dim", a.out_dim, "projection dimension (default: config pca_dim)");
    expo->add_option("--labels", a.labels, "cluster labels when the checkpoint has no cluster head");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        return run(app.get_subcommands().front()->get_name(), a);
    } catch (const disc::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
