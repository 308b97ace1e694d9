#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace daal::pseudo {

/// Axis-aligned box in image coordinates, min corner inclusive.
struct Box {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

    bool well_formed() const { return x_min < x_max && y_min < y_max; }
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    /// Inclusive containment on all four bounds.
    bool contains(double x, double y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
    Box clamped(double image_w, double image_h) const;
};

double iou(const Box& a, const Box& b);

struct Detection {
    Box box;
    double score = 0.0;
    int class_id = 0;
};

enum class Provenance { pseudo_label, ground_truth };

/// Class-agnostic box set for one image. Retained pseudo boxes all had
/// score > tau at filter time.
struct PseudoBoxSet {
    std::vector<Box> boxes;
    Provenance provenance = Provenance::pseudo_label;
};

struct FilterResult {
    PseudoBoxSet set;
    std::size_t malformed_rejected = 0; // counted, never fatal
};

/// Keeps detections with score strictly greater than tau, dropping class
/// labels. Malformed boxes (min >= max) are counted and skipped.
FilterResult filter_detections(std::span<const Detection> detections,
                               double tau);

/// One pyramid level's raster: width x height cells at the given stride.
struct LevelGeometry {
    std::size_t width = 0;
    std::size_t height = 0;
    double stride = 1.0;
};

/// Binary foreground mask for one level; index (u, v) -> v * width + u.
using WeightMask = std::vector<std::uint8_t>;

/// Cell (u, v) is foreground iff its image-coordinate center
/// ((u + 0.5) * stride, (v + 0.5) * stride) lies inside at least one box,
/// bounds inclusive.
std::vector<WeightMask> rasterize_masks(const PseudoBoxSet& boxes,
                                        std::span<const LevelGeometry> levels);

/// Ground-truth boxes take the identical rasterization path.
std::vector<WeightMask>
source_masks_from_gt(std::span<const Box> annotations,
                     std::span<const LevelGeometry> levels);

/// Debug dump: image id on its own line, then one "x_min y_min x_max y_max
/// score" line per box, six decimals, record terminated by a blank line.
void dump_pseudo_record(std::ostream& os, std::uint64_t image_id,
                        std::span<const Detection> retained);

} // namespace daal::pseudo
