#pragma once

#include <span>
#include <vector>

#include "daal/pseudo.hpp"

namespace daal::toy {

struct Prediction {
    std::size_t image_id = 0;
    std::size_t box_index = 0; // index within its image, for tie-breaks
    int class_id = 0;
    double confidence = 0.0;
    pseudo::Box box; // pixel coordinates
};

struct GroundTruthBox {
    std::size_t image_id = 0;
    int class_id = 0;
    pseudo::Box box;
};

/// Average precision table over IoU thresholds. AP uses all-points
/// interpolation (exact area under the precision envelope). Predictions at
/// equal confidence rank by image id, then box index.
struct ApReport {
    std::vector<double> thresholds;
    std::vector<std::vector<double>> per_class_ap; // [threshold][class]
    std::vector<double> mean_ap;                   // [threshold]
    /// mAP@{0.7,0.8,0.9} / mAP@0.5; zero when mAP@0.5 is zero.
    double ratio70 = 0.0, ratio80 = 0.0, ratio90 = 0.0;

    double map_at(double threshold) const;
};

ApReport evaluate_map(std::span<const Prediction> predictions,
                      std::span<const GroundTruthBox> ground_truth,
                      std::span<const double> thresholds,
                      std::size_t num_classes);

/// The standard threshold grid 0.5..0.9.
std::vector<double> default_thresholds();

} // namespace daal::toy
