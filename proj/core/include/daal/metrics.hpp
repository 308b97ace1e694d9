#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "daal/config.hpp"
#include "daal/map_eval.hpp"

namespace daal::cli {

/// Loss components of one optimization step. Fields the active placement
/// does not compute stay at zero and their CSV columns are omitted.
struct StepRecord {
    std::uint64_t step = 0;
    double l_det = 0.0;
    double l_d = 0.0;       // global adversarial term
    double l_d_hat = 0.0;   // object-aware term
    double l_oaa = 0.0;     // l_d + lambda * l_d_hat
    double l_decoder = 0.0; // sliced-Wasserstein or adversarial decoder loss
    double total = 0.0;
    double wall_ms = 0.0;   // kept out of metrics.csv (not deterministic)
};

/// Append-only per-step log plus periodic mAP rows.
class MetricsLog {
public:
    void push(const StepRecord& record) { records_.push_back(record); }
    void push_map(std::uint64_t step, const toy::ApReport& report);

    const std::vector<StepRecord>& records() const { return records_; }

    /// Deterministic per-step CSV; columns chosen by placement and decoder
    /// mode so a placement=none log carries only detection entries.
    void write_metrics_csv(std::ostream& os, Placement placement,
                           DecoderMode decoder_mode) const;
    /// Periodic evaluation table (step, per-threshold mAP, ratios).
    void write_map_csv(std::ostream& os) const;
    /// Wall-clock per step; written separately because timings differ
    /// between byte-identical runs.
    void write_timings_csv(std::ostream& os) const;

private:
    struct MapRow {
        std::uint64_t step;
        toy::ApReport report;
    };
    std::vector<StepRecord> records_;
    std::vector<MapRow> map_rows_;
};

std::string format_map_table(const toy::ApReport& report,
                             std::size_t num_classes);

} // namespace daal::cli
