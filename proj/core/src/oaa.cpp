#include "daal/oaa.hpp"

#include <cmath>
#include <stdexcept>

namespace daal::oaa {

namespace {

constexpr double kScoreSlack = 1e-9;

nd::Tensor init_linear(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> data(rows * cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (double& v : data) v = rng.normal() * scale;
    nd::Tensor t({rows, cols}, std::move(data));
    t.set_requires_grad(true);
    return t;
}

} // namespace

DiscriminatorHead DiscriminatorHead::init(std::size_t channels,
                                          std::size_t hidden, Rng& rng) {
    DiscriminatorHead head;
    head.w1 = init_linear(channels, hidden, rng);
    head.b1 = nd::Tensor::zeros({1, hidden});
    head.b1.set_requires_grad(true);
    head.w2 = init_linear(hidden, 1, rng);
    head.b2 = nd::Tensor::zeros({1, 1});
    head.b2.set_requires_grad(true);
    return head;
}

HeadVars enter_head(nd::Graph& g, const DiscriminatorHead& head,
                    bool trainable, double grl_factor) {
    auto enter = [&](const nd::Tensor& t) {
        nd::Tensor copy = t;
        copy.set_requires_grad(trainable);
        return g.leaf(std::move(copy));
    };
    HeadVars vars;
    vars.w1 = enter(head.w1);
    vars.b1 = enter(head.b1);
    vars.w2 = enter(head.w2);
    vars.b2 = enter(head.b2);
    vars.grl_factor = grl_factor;
    return vars;
}

nd::Var discriminate(nd::Graph& g, const HeadVars& head, nd::Var features) {
    const nd::Tensor& f = features.value();
    if (f.rank() != 2) {
        throw std::invalid_argument("discriminate: features must be "
                                    "pixels x channels, got " + f.shape_str());
    }
    if (f.extent(1) != head.w1.value().extent(0)) {
        throw std::invalid_argument(
            "discriminate: channel width " + std::to_string(f.extent(1)) +
            " does not match discriminator " +
            std::to_string(head.w1.value().extent(0)));
    }
    nd::Var x = g.grad_reverse(features, head.grl_factor);
    x = nd::add_bias_row(g, g.matmul(x, head.w1), head.b1);
    x = g.relu(x);
    x = nd::add_bias_row(g, g.matmul(x, head.w2), head.b2);
    nd::Var p = g.sigmoid(x);
    // Affine squeeze into [slack, 1-slack]; keeps every score strictly
    // inside (0,1) so downstream logs stay finite.
    return nd::add_const(g, g.scalar_mul(p, 1.0 - 2.0 * kScoreSlack),
                         kScoreSlack);
}

namespace {

void check_level_structure(const LevelScores& src, const LevelScores& tgt) {
    if (src.empty() || src.size() != tgt.size()) {
        throw std::invalid_argument("align loss: level structure mismatch");
    }
    for (std::size_t l = 0; l < src.size(); ++l) {
        if (src[l].empty() || tgt[l].empty()) {
            throw std::invalid_argument("align loss: empty batch on level " +
                                        std::to_string(l));
        }
    }
}

nd::Var concat_level(nd::Graph& g, const std::vector<nd::Var>& scores) {
    if (scores.size() == 1) return scores[0];
    return g.concat(scores, 0);
}

} // namespace

nd::Var global_align_loss(nd::Graph& g, const LevelScores& src,
                          const LevelScores& tgt) {
    check_level_structure(src, tgt);
    nd::Var total;
    for (std::size_t l = 0; l < src.size(); ++l) {
        nd::Var ps = concat_level(g, src[l]);
        nd::Var pt = concat_level(g, tgt[l]);
        nd::Var term_src = g.scalar_mul(g.mean(g.log(ps)), -1.0);
        nd::Var term_tgt = g.scalar_mul(g.mean(g.log(one_minus(g, pt))), -1.0);
        nd::Var level = g.add(term_src, term_tgt);
        total = l == 0 ? level : g.add(total, level);
    }
    return total;
}

nd::Var masked_align_loss(nd::Graph& g, const LevelScores& src,
                          const LevelScores& tgt, const LevelMasks& mask_src,
                          const LevelMasks& mask_tgt) {
    check_level_structure(src, tgt);
    if (mask_src.size() != src.size() || mask_tgt.size() != tgt.size()) {
        throw std::invalid_argument("masked_align_loss: mask level count "
                                    "mismatch");
    }

    auto masked_term = [&](const std::vector<nd::Var>& scores,
                           const std::vector<nd::Tensor>& masks,
                           bool target_side) {
        if (masks.size() != scores.size()) {
            throw std::invalid_argument("masked_align_loss: mask batch "
                                        "mismatch");
        }
        std::vector<double> concat_mask;
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const nd::Tensor& sv = scores[i].value();
            if (masks[i].shape() != sv.shape()) {
                throw std::invalid_argument(
                    "masked_align_loss: mask shape " + masks[i].shape_str() +
                    " vs scores " + sv.shape_str());
            }
            for (double v : masks[i].data()) {
                concat_mask.push_back(v);
                if (v != 0.0) ++nonzero;
            }
        }
        nd::Var p = concat_level(g, scores);
        nd::Var logp = target_side ? g.log(one_minus(g, p)) : g.log(p);
        nd::Var mask_var = g.constant(
            nd::Tensor(p.value().shape(), std::move(concat_mask)));
        const double norm =
            -1.0 / static_cast<double>(std::max<std::size_t>(1, nonzero));
        return g.scalar_mul(g.sum(g.mul(mask_var, logp)), norm);
    };

    nd::Var total;
    for (std::size_t l = 0; l < src.size(); ++l) {
        nd::Var level = g.add(masked_term(src[l], mask_src[l], false),
                              masked_term(tgt[l], mask_tgt[l], true));
        total = l == 0 ? level : g.add(total, level);
    }
    return total;
}

nd::Var oaa_loss(nd::Graph& g, nd::Var global, nd::Var masked, double lambda) {
    if (lambda < 0.0) {
        throw std::invalid_argument("oaa_loss: lambda must be >= 0");
    }
    return g.add(global, g.scalar_mul(masked, lambda));
}

nd::Tensor mask_to_tensor(const pseudo::WeightMask& mask) {
    std::vector<double> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        data[i] = static_cast<double>(mask[i]);
    }
    return nd::Tensor({mask.size(), 1}, std::move(data));
}

} // namespace daal::oaa
