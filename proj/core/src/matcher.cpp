#include "daal/matcher.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "daal/hungarian.hpp"

namespace daal::toy {

std::array<double, 4> annotation_to_cs(const Annotation& ann, double image_w,
                                       double image_h) {
    const pseudo::Box& b = ann.box;
    return {(b.x_min + b.x_max) / 2.0 / image_w,
            (b.y_min + b.y_max) / 2.0 / image_h,
            (b.x_max - b.x_min) / image_w,
            (b.y_max - b.y_min) / image_h};
}

pseudo::Box cs_to_box(double cx, double cy, double w, double h, double image_w,
                      double image_h) {
    pseudo::Box b;
    b.x_min = (cx - w / 2.0) * image_w;
    b.x_max = (cx + w / 2.0) * image_w;
    b.y_min = (cy - h / 2.0) * image_h;
    b.y_max = (cy + h / 2.0) * image_h;
    return b;
}

namespace {

pseudo::Box cs_row_to_unit_box(const nd::Tensor& boxes_cs, std::size_t row) {
    const double cx = boxes_cs.at2(row, 0);
    const double cy = boxes_cs.at2(row, 1);
    const double w = boxes_cs.at2(row, 2);
    const double h = boxes_cs.at2(row, 3);
    return pseudo::Box{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

} // namespace

MatchResult match_predictions(const nd::Tensor& boxes_cs,
                              const nd::Tensor& cls_probs,
                              std::span<const Annotation> gts, double image_w,
                              double image_h) {
    if (boxes_cs.rank() != 2 || boxes_cs.extent(1) != 4 ||
        cls_probs.rank() != 2 || cls_probs.extent(0) != boxes_cs.extent(0)) {
        throw std::invalid_argument("match_predictions: bad prediction shapes");
    }
    const std::size_t m = boxes_cs.extent(0);
    if (gts.size() > m) {
        throw std::invalid_argument(
            "match_predictions: " + std::to_string(gts.size()) +
            " objects but only " + std::to_string(m) + " queries");
    }
    MatchResult result;
    if (gts.empty()) return result;

    std::vector<std::vector<double>> cost(gts.size(),
                                          std::vector<double>(m, 0.0));
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        const auto gt_cs = annotation_to_cs(gts[gi], image_w, image_h);
        const pseudo::Box gt_unit{gt_cs[0] - gt_cs[2] / 2.0,
                                  gt_cs[1] - gt_cs[3] / 2.0,
                                  gt_cs[0] + gt_cs[2] / 2.0,
                                  gt_cs[1] + gt_cs[3] / 2.0};
        const std::size_t cls = static_cast<std::size_t>(gts[gi].class_id);
        if (gts[gi].class_id < 0 || cls + 1 >= cls_probs.extent(1)) {
            throw std::invalid_argument("match_predictions: class id " +
                                        std::to_string(gts[gi].class_id) +
                                        " has no score column");
        }
        for (std::size_t q = 0; q < m; ++q) {
            const pseudo::Box pred = cs_row_to_unit_box(boxes_cs, q);
            double l1 = 0.0;
            for (std::size_t c = 0; c < 4; ++c) {
                l1 += std::fabs(boxes_cs.at2(q, c) - gt_cs[c]);
            }
            const double cls_term = 1.0 - cls_probs.at2(q, cls);
            const double iou_term = 1.0 - pseudo::iou(pred, gt_unit);
            cost[gi][q] = cls_term + l1 + iou_term;
        }
    }
    const std::vector<std::size_t> cols = min_cost_assignment(cost);
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        result.pairs.emplace_back(cols[gi], gi);
        result.total_cost += cost[gi][cols[gi]];
    }
    return result;
}

namespace {

nd::Var as_scalar(nd::Graph& g, nd::Var v) { return g.reshape(v, {}); }

nd::Var abs_var(nd::Graph& g, nd::Var v) {
    return g.add(g.relu(v), g.relu(g.scalar_mul(v, -1.0)));
}

nd::Var max_var(nd::Graph& g, nd::Var a, nd::Var b) {
    return g.add(a, g.relu(g.sub(b, a)));
}

nd::Var min_var(nd::Graph& g, nd::Var a, nd::Var b) {
    return g.sub(a, g.relu(g.sub(a, b)));
}

} // namespace

nd::Var detection_loss(nd::Graph& g, nd::Var boxes_cs, nd::Var cls_probs,
                       const MatchResult& match,
                       std::span<const Annotation> gts, double image_w,
                       double image_h) {
    const nd::Tensor& probs = cls_probs.value();
    const std::size_t m = probs.extent(0);
    const std::size_t columns = probs.extent(1);
    const std::size_t background = columns - 1;

    // Classification: one-hot targets select the log-probabilities, matched
    // queries aim at their object's class and the rest at background.
    std::vector<double> onehot(m * columns, 0.0);
    std::vector<std::size_t> target(m, background);
    for (const auto& [q, gi] : match.pairs) {
        target[q] = static_cast<std::size_t>(gts[gi].class_id);
    }
    for (std::size_t q = 0; q < m; ++q) onehot[q * columns + target[q]] = 1.0;
    nd::Var onehot_var = g.constant(nd::Tensor({m, columns}, std::move(onehot)));
    nd::Var ce = g.scalar_mul(g.sum(g.mul(onehot_var, g.log(cls_probs))),
                              -1.0 / static_cast<double>(m));

    if (match.pairs.empty()) return as_scalar(g, ce);

    // Box terms on matched pairs.
    std::vector<std::size_t> rows;
    std::vector<double> gt_cs_data;
    for (const auto& [q, gi] : match.pairs) {
        rows.push_back(q);
        const auto cs = annotation_to_cs(gts[gi], image_w, image_h);
        gt_cs_data.insert(gt_cs_data.end(), cs.begin(), cs.end());
    }
    const std::size_t npair = match.pairs.size();
    nd::Var matched = g.gather(boxes_cs, rows, 0); // npair x 4
    nd::Var gt_cs = g.constant(nd::Tensor({npair, 4}, std::move(gt_cs_data)));
    nd::Var l1 = g.scalar_mul(g.sum(abs_var(g, g.sub(matched, gt_cs))),
                              1.0 / static_cast<double>(npair));

    nd::Var iou_acc;
    for (std::size_t p = 0; p < npair; ++p) {
        nd::Var row = g.reshape(g.gather(matched, {p}, 0), {4});
        nd::Var cx = g.gather(row, {0});
        nd::Var cy = g.gather(row, {1});
        nd::Var w = g.gather(row, {2});
        nd::Var h = g.gather(row, {3});
        nd::Var hw = g.scalar_mul(w, 0.5);
        nd::Var hh = g.scalar_mul(h, 0.5);
        nd::Var x1 = g.sub(cx, hw), x2 = g.add(cx, hw);
        nd::Var y1 = g.sub(cy, hh), y2 = g.add(cy, hh);

        const auto [q, gi] = match.pairs[p];
        (void)q;
        const auto cs = annotation_to_cs(gts[gi], image_w, image_h);
        auto c1 = [&](double v) { return g.constant(nd::Tensor({1}, {v})); };
        nd::Var gx1 = c1(cs[0] - cs[2] / 2.0), gx2 = c1(cs[0] + cs[2] / 2.0);
        nd::Var gy1 = c1(cs[1] - cs[3] / 2.0), gy2 = c1(cs[1] + cs[3] / 2.0);

        nd::Var iw = g.relu(g.sub(min_var(g, x2, gx2), max_var(g, x1, gx1)));
        nd::Var ih = g.relu(g.sub(min_var(g, y2, gy2), max_var(g, y1, gy1)));
        nd::Var inter = g.mul(iw, ih);
        nd::Var area_pred = g.mul(w, h); // sigmoid keeps both factors positive
        nd::Var uni = g.sub(g.add(area_pred, c1(cs[2] * cs[3])), inter);
        nd::Var one_minus_iou = nd::one_minus(g, g.div(inter, uni));
        iou_acc = p == 0 ? one_minus_iou : g.add(iou_acc, one_minus_iou);
    }
    nd::Var iou_loss =
        g.scalar_mul(iou_acc, 1.0 / static_cast<double>(npair));

    return g.add(as_scalar(g, ce),
                 g.add(as_scalar(g, l1), as_scalar(g, iou_loss)));
}

} // namespace daal::toy
