#pragma once

#include <span>
#include <utility>
#include <vector>

#include "daal/detector.hpp"
#include "daal/graph.hpp"
#include "daal/scene.hpp"

namespace daal::toy {

/// Normalized center-size form of an annotation box.
std::array<double, 4> annotation_to_cs(const Annotation& ann, double image_w,
                                       double image_h);
/// Center-size in [0,1] to pixel-coordinate corners.
pseudo::Box cs_to_box(double cx, double cy, double w, double h, double image_w,
                      double image_h);

struct MatchResult {
    /// (query index, ground-truth index) pairs, ordered by ground truth.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double total_cost = 0.0;
};

/// Minimum-cost assignment of ground-truth objects to queries under
/// cost = (1 - p[class]) + L1 center-size distance + (1 - IoU).
/// Requires at least as many queries as objects.
MatchResult match_predictions(const nd::Tensor& boxes_cs,
                              const nd::Tensor& cls_probs,
                              std::span<const Annotation> gts, double image_w,
                              double image_h);

/// Supervised set-prediction loss for one image: class cross-entropy over
/// all queries (background where unmatched), averaged over queries, plus L1
/// and (1 - IoU) box terms averaged over matched pairs. Scalar, finite,
/// nonnegative as confidence stays below 1.
nd::Var detection_loss(nd::Graph& g, nd::Var boxes_cs, nd::Var cls_probs,
                       const MatchResult& match,
                       std::span<const Annotation> gts, double image_w,
                       double image_h);

} // namespace daal::toy
