// Command line front end: train / eval / ablate / gen-data / check.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "daal/config.hpp"
#include "daal/runner.hpp"
#include "daal/verify.hpp"

namespace {

using daal::cli::RunConfig;

/// Output root override: DAAL_OUTPUT_ROOT prefixes relative output dirs.
std::string resolve_output_dir(const std::string& dir) {
    const char* root = std::getenv("DAAL_OUTPUT_ROOT");
    if (!root || dir.empty() || dir.front() == '/') return dir;
    return std::string(root) + "/" + dir;
}

struct ConfigCliArgs {
    std::string config_file;
    std::vector<std::string> sets;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_config_options(CLI::App* cmd, ConfigCliArgs& args) {
    cmd->add_option("-c,--config", args.config_file,
                    "key=value config file (defaults apply when omitted)");
    cmd->add_option("--set", args.sets,
                    "config override as key=value; wins over the file");
    cmd->add_option("-o,--output", args.output_dir, "output directory");
    cmd->add_option("--seed", args.seed, "random seed")
        ->each([&](const std::string&) { args.seed_given = true; });
}

RunConfig build_config(const ConfigCliArgs& args) {
    RunConfig cfg;
    if (!args.config_file.empty()) {
        cfg = daal::cli::parse_config_file(args.config_file);
    }
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& kv : args.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv +
                                        "'");
        }
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    daal::cli::apply_overrides(cfg, overrides);
    if (args.seed_given) cfg.seed = args.seed;
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    cfg.output_dir = resolve_output_dir(cfg.output_dir);
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"domain-adaptive detection alignment testbed"};
    app.require_subcommand(1);

    ConfigCliArgs train_args;
    std::string resume_from;
    CLI::App* train = app.add_subcommand("train", "train a detector");
    add_config_options(train, train_args);
    train->add_option("--resume", resume_from,
                      "checkpoint to resume (config hash must match)");

    std::string eval_ckpt, eval_dataset, eval_out;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--dataset", eval_dataset,
                     "dataset snapshot directory (regenerated from the "
                     "config when omitted)");
    eval->add_option("-o,--output", eval_out, "output directory for eval.csv");

    ConfigCliArgs ablate_args;
    std::vector<std::uint64_t> ablate_seeds = {11, 23, 37, 51, 65};
    CLI::App* ablate =
        app.add_subcommand("ablate", "train and compare alignment variants");
    add_config_options(ablate, ablate_args);
    ablate->add_option("--seeds", ablate_seeds,
                       "seeds for the study (>= 3)");

    ConfigCliArgs gen_args;
    std::string gen_out = "data";
    CLI::App* gen = app.add_subcommand("gen-data",
                                       "write dataset snapshots for replay");
    add_config_options(gen, gen_args);
    gen->add_option("--data-dir", gen_out, "snapshot output directory");

    bool check_fast = false;
    int check_only = 0;
    CLI::App* check =
        app.add_subcommand("check", "run the invariant and oracle suite");
    check->add_flag("--skip-slow", check_fast,
                    "skip the adaptation study (criteria 6 and 7)");
    check->add_option("--only", check_only, "run a single criterion (1..8)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const RunConfig cfg = build_config(train_args);
            const daal::cli::TrainResult result =
                daal::cli::run_train(cfg, resume_from, &std::cout);
            std::cout << "checkpoint: " << result.checkpoint_path << "\n"
                      << "metrics:    " << result.metrics_path << "\n";
            return 0;
        }
        if (*eval) {
            const daal::cli::EvalResult result = daal::cli::run_eval(
                eval_ckpt, eval_dataset, resolve_output_dir(eval_out),
                &std::cout);
            std::cout << "csv: " << result.csv_path << "\n";
            return 0;
        }
        if (*ablate) {
            const RunConfig cfg = build_config(ablate_args);
            daal::cli::run_ablation(cfg, ablate_seeds, &std::cout);
            return 0;
        }
        if (*gen) {
            const RunConfig cfg = build_config(gen_args);
            daal::cli::run_gen_data(cfg, resolve_output_dir(gen_out));
            std::cout << "snapshots written under " << resolve_output_dir(gen_out)
                      << "\n";
            return 0;
        }
        if (*check) {
            daal::verify::Options options;
            options.skip_slow = check_fast;
            options.only = check_only;
            options.progress = &std::cout;
            const auto results = daal::verify::run_acceptance(options);
            return daal::verify::all_passed(results) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
