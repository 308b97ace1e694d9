#include "daal/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace daal::pseudo {

Box Box::clamped(double image_w, double image_h) const {
    Box b;
    b.x_min = std::max(0.0, std::min(x_min, image_w));
    b.y_min = std::max(0.0, std::min(y_min, image_h));
    b.x_max = std::max(0.0, std::min(x_max, image_w));
    b.y_max = std::max(0.0, std::min(y_max, image_h));
    return b;
}

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) -
                                        std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) -
                                        std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

FilterResult filter_detections(std::span<const Detection> detections,
                               double tau) {
    FilterResult result;
    result.set.provenance = Provenance::pseudo_label;
    for (const Detection& det : detections) {
        if (!det.box.well_formed()) {
            ++result.malformed_rejected;
            continue;
        }
        if (det.score > tau) {
            result.set.boxes.push_back(det.box);
        }
    }
    return result;
}

std::vector<WeightMask> rasterize_masks(const PseudoBoxSet& boxes,
                                        std::span<const LevelGeometry> levels) {
    std::vector<WeightMask> masks;
    masks.reserve(levels.size());
    for (const LevelGeometry& level : levels) {
        WeightMask mask(level.width * level.height, 0);
        for (const Box& box : boxes.boxes) {
            // Cell-center containment; only the covered cell range is swept.
            const double s = level.stride;
            auto first_cell = [&](double lo) {
                const long c = static_cast<long>(std::ceil(lo / s - 0.5));
                return std::max(0L, c);
            };
            auto last_cell = [&](double hi, std::size_t n) {
                const long c = static_cast<long>(std::floor(hi / s - 0.5));
                return std::min(static_cast<long>(n) - 1, c);
            };
            const long u0 = first_cell(box.x_min);
            const long u1 = last_cell(box.x_max, level.width);
            const long v0 = first_cell(box.y_min);
            const long v1 = last_cell(box.y_max, level.height);
            for (long v = v0; v <= v1; ++v) {
                for (long u = u0; u <= u1; ++u) {
                    const double cx = (static_cast<double>(u) + 0.5) * s;
                    const double cy = (static_cast<double>(v) + 0.5) * s;
                    if (box.contains(cx, cy)) {
                        mask[static_cast<std::size_t>(v) * level.width +
                             static_cast<std::size_t>(u)] = 1;
                    }
                }
            }
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

std::vector<WeightMask>
source_masks_from_gt(std::span<const Box> annotations,
                     std::span<const LevelGeometry> levels) {
    PseudoBoxSet set;
    set.provenance = Provenance::ground_truth;
    set.boxes.assign(annotations.begin(), annotations.end());
    return rasterize_masks(set, levels);
}

void dump_pseudo_record(std::ostream& os, std::uint64_t image_id,
                        std::span<const Detection> retained) {
    os << image_id << "\n";
    char line[160];
    for (const Detection& det : retained) {
        std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f %.6f",
                      det.box.x_min, det.box.y_min, det.box.x_max,
                      det.box.y_max, det.score);
        os << line << "\n";
    }
    os << "\n";
}

} // namespace daal::pseudo
