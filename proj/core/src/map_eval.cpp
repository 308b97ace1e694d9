#include "daal/map_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace daal::toy {

double ApReport::map_at(double threshold) const {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (std::fabs(thresholds[i] - threshold) < 1e-9) return mean_ap[i];
    }
    throw std::invalid_argument("ApReport: threshold not evaluated");
}

std::vector<double> default_thresholds() { return {0.5, 0.6, 0.7, 0.8, 0.9}; }

namespace {

double average_precision(std::vector<const Prediction*>& preds,
                         const std::map<std::size_t, std::vector<pseudo::Box>>&
                             gt_by_image,
                         std::size_t total_gt, double iou_thr) {
    if (total_gt == 0) return -1.0; // class absent from ground truth
    if (preds.empty()) return 0.0;

    // Greedy matching in confidence order; each ground-truth box may be
    // claimed once.
    std::map<std::size_t, std::vector<char>> claimed;
    for (const auto& [img, boxes] : gt_by_image) {
        claimed[img] = std::vector<char>(boxes.size(), 0);
    }
    std::vector<char> is_tp(preds.size(), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const Prediction& p = *preds[i];
        auto it = gt_by_image.find(p.image_id);
        if (it == gt_by_image.end()) continue;
        const std::vector<pseudo::Box>& boxes = it->second;
        std::vector<char>& used = claimed[p.image_id];
        double best = 0.0;
        std::size_t best_j = boxes.size();
        for (std::size_t j = 0; j < boxes.size(); ++j) {
            if (used[j]) continue;
            const double v = pseudo::iou(p.box, boxes[j]);
            if (v > best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j < boxes.size() && best >= iou_thr) {
            used[best_j] = 1;
            is_tp[i] = 1;
        }
    }

    // Precision envelope integration over the exact recall steps.
    std::vector<double> precision(preds.size()), recall(preds.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        tp += is_tp[i];
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }
    for (std::size_t i = preds.size() - 1; i-- > 0;) {
        precision[i] = std::max(precision[i], precision[i + 1]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

} // namespace

ApReport evaluate_map(std::span<const Prediction> predictions,
                      std::span<const GroundTruthBox> ground_truth,
                      std::span<const double> thresholds,
                      std::size_t num_classes) {
    if (thresholds.empty()) {
        throw std::invalid_argument("evaluate_map: no thresholds");
    }
    ApReport report;
    report.thresholds.assign(thresholds.begin(), thresholds.end());

    // Group predictions per class, sorted by confidence with the documented
    // tie-break so evaluation is order-invariant.
    std::vector<std::vector<const Prediction*>> by_class(num_classes);
    for (const Prediction& p : predictions) {
        if (p.class_id >= 0 && static_cast<std::size_t>(p.class_id) < num_classes) {
            by_class[static_cast<std::size_t>(p.class_id)].push_back(&p);
        }
    }
    for (auto& group : by_class) {
        std::sort(group.begin(), group.end(),
                  [](const Prediction* a, const Prediction* b) {
                      if (a->confidence != b->confidence) {
                          return a->confidence > b->confidence;
                      }
                      if (a->image_id != b->image_id) {
                          return a->image_id < b->image_id;
                      }
                      return a->box_index < b->box_index;
                  });
    }

    std::vector<std::map<std::size_t, std::vector<pseudo::Box>>> gt_by_class(
        num_classes);
    std::vector<std::size_t> gt_count(num_classes, 0);
    for (const GroundTruthBox& gt : ground_truth) {
        if (gt.class_id < 0 ||
            static_cast<std::size_t>(gt.class_id) >= num_classes) {
            throw std::invalid_argument("evaluate_map: class id out of range");
        }
        gt_by_class[static_cast<std::size_t>(gt.class_id)][gt.image_id]
            .push_back(gt.box);
        ++gt_count[static_cast<std::size_t>(gt.class_id)];
    }

    for (double thr : thresholds) {
        std::vector<double> per_class(num_classes, -1.0);
        double acc = 0.0;
        std::size_t present = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            per_class[c] =
                average_precision(by_class[c], gt_by_class[c], gt_count[c], thr);
            if (per_class[c] >= 0.0) {
                acc += per_class[c];
                ++present;
            }
        }
        report.per_class_ap.push_back(std::move(per_class));
        report.mean_ap.push_back(present ? acc / static_cast<double>(present)
                                         : 0.0);
    }

    auto maybe_map = [&](double thr) -> double {
        for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
            if (std::fabs(report.thresholds[i] - thr) < 1e-9) {
                return report.mean_ap[i];
            }
        }
        return -1.0;
    };
    const double base = maybe_map(0.5);
    auto ratio = [&](double thr) {
        const double v = maybe_map(thr);
        return (base > 0.0 && v >= 0.0) ? v / base : 0.0;
    };
    report.ratio70 = ratio(0.7);
    report.ratio80 = ratio(0.8);
    report.ratio90 = ratio(0.9);
    return report;
}

} // namespace daal::toy
