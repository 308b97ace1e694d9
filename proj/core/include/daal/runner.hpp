#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "daal/config.hpp"
#include "daal/map_eval.hpp"
#include "daal/metrics.hpp"
#include "daal/train.hpp"

namespace daal::cli {

struct TrainResult {
    toy::ApReport final_map;
    std::string checkpoint_path;
    std::string metrics_path;
    toy::LossBundle last_losses;
};

/// Full training run: optional source-only pretraining, adaptation with
/// per-epoch pseudo-label refresh, checkpoints at the configured cadence,
/// final evaluation. Deterministic from (config, seed): metrics.csv and
/// checkpoints are byte-identical across repeated runs. Pass a resume
/// checkpoint to continue an interrupted run; a config-hash mismatch is
/// refused.
TrainResult run_train(const RunConfig& cfg, const std::string& resume_from = "",
                      std::ostream* progress = nullptr);

struct EvalResult {
    toy::ApReport report;
    std::string table;
    std::string csv_path;
};

/// Evaluates a checkpoint. The model configuration is recovered from the
/// sibling "<checkpoint>.config" file and verified against the stored
/// hash. With dataset_dir empty the evaluation pool is regenerated from
/// the config; otherwise a dataset snapshot is loaded from the directory.
EvalResult run_eval(const std::string& checkpoint_path,
                    const std::string& dataset_dir = "",
                    const std::string& output_dir = "",
                    std::ostream* progress = nullptr);

struct AblationRow {
    std::string variant;
    std::vector<double> map50;      // per seed
    std::vector<double> ratio80;    // per seed
    std::vector<double> ratio90;    // per seed
    double mean_map50 = 0.0;
    double sd_map50 = 0.0;
    double mean_ratio80 = 0.0;
    double mean_ratio90 = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::string summary; // mean +- sd table plus pairwise orderings
    const AblationRow& row(const std::string& variant) const;
};

/// Trains the placement and alignment-method variants over the given
/// seeds, sharing one source-pretrained model per seed, and reports mean
/// and spread of target mAP. Variants: source (none), ga, oaa
/// (backbone-only), ada, ota (decoder-only), full (oaa+ota).
AblationResult run_ablation(const RunConfig& base,
                            std::span<const std::uint64_t> seeds,
                            std::ostream* progress = nullptr);

/// Writes source/target/eval dataset snapshots under out_dir.
void run_gen_data(const RunConfig& cfg, const std::string& out_dir);

} // namespace daal::cli
