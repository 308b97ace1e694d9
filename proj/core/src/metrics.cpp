#include "daal/metrics.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

namespace daal::cli {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string num6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

void MetricsLog::push_map(std::uint64_t step, const toy::ApReport& report) {
    map_rows_.push_back(MapRow{step, report});
}

void MetricsLog::write_metrics_csv(std::ostream& os, Placement placement,
                                   DecoderMode decoder_mode) const {
    const bool backbone = placement == Placement::backbone ||
                          placement == Placement::both;
    const bool decoder = placement == Placement::decoder ||
                         placement == Placement::both;
    os << "step,l_det";
    if (backbone) os << ",l_d,l_d_hat,l_oaa";
    if (decoder) {
        os << (decoder_mode == DecoderMode::ota ? ",l_ota" : ",l_ada");
    }
    os << ",total\n";
    for (const StepRecord& r : records_) {
        os << r.step << "," << num(r.l_det);
        if (backbone) {
            os << "," << num(r.l_d) << "," << num(r.l_d_hat) << ","
               << num(r.l_oaa);
        }
        if (decoder) os << "," << num(r.l_decoder);
        os << "," << num(r.total) << "\n";
    }
}

void MetricsLog::write_map_csv(std::ostream& os) const {
    os << "step";
    if (!map_rows_.empty()) {
        for (double t : map_rows_.front().report.thresholds) {
            os << ",map" << static_cast<int>(t * 100 + 0.5);
        }
    } else {
        os << ",map50,map60,map70,map80,map90";
    }
    os << ",ratio70,ratio80,ratio90\n";
    for (const MapRow& row : map_rows_) {
        os << row.step;
        for (double v : row.report.mean_ap) os << "," << num6(v);
        os << "," << num6(row.report.ratio70) << "," << num6(row.report.ratio80)
           << "," << num6(row.report.ratio90) << "\n";
    }
}

void MetricsLog::write_timings_csv(std::ostream& os) const {
    os << "step,wall_ms\n";
    for (const StepRecord& r : records_) {
        os << r.step << "," << num6(r.wall_ms) << "\n";
    }
}

std::string format_map_table(const toy::ApReport& report,
                             std::size_t num_classes) {
    std::ostringstream os;
    os << "iou";
    for (std::size_t c = 0; c < num_classes; ++c) os << "  class" << c;
    os << "     mAP\n";
    for (std::size_t t = 0; t < report.thresholds.size(); ++t) {
        char thr[16];
        std::snprintf(thr, sizeof(thr), "%.1f", report.thresholds[t]);
        os << thr;
        for (std::size_t c = 0; c < num_classes; ++c) {
            const double ap = report.per_class_ap[t][c];
            os << "  " << (ap < 0.0 ? "  --  " : num6(ap));
        }
        os << "  " << num6(report.mean_ap[t]) << "\n";
    }
    os << "ratios map70/50=" << num6(report.ratio70)
       << " map80/50=" << num6(report.ratio80)
       << " map90/50=" << num6(report.ratio90) << "\n";
    return os.str();
}

} // namespace daal::cli
