#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "daal/oaa.hpp"
#include "daal/rng.hpp"

using namespace daal;
using nd::Graph;
using nd::Tensor;
using nd::Var;

namespace {

Tensor random_scores(Rng& rng, std::size_t n) {
    std::vector<double> data(n);
    for (double& v : data) v = rng.uniform(0.05, 0.95);
    return Tensor({n, 1}, std::move(data));
}

// Independent scalar recomputation of the global loss (Eq-1/2 shape).
double scalar_global(const std::vector<std::vector<Tensor>>& src,
                     const std::vector<std::vector<Tensor>>& tgt) {
    double total = 0.0;
    for (std::size_t l = 0; l < src.size(); ++l) {
        double s = 0.0, t = 0.0;
        std::size_t ns = 0, nt = 0;
        for (const Tensor& img : src[l]) {
            for (double p : img.data()) {
                s += -std::log(p);
                ++ns;
            }
        }
        for (const Tensor& img : tgt[l]) {
            for (double p : img.data()) {
                t += -std::log(1.0 - p);
                ++nt;
            }
        }
        total += s / ns + t / nt;
    }
    return total;
}

// Unnormalized masked sums, per level and domain, for the monotonicity
// property.
double scalar_masked_unnormalized(const Tensor& scores, const Tensor& mask,
                                  bool target_side) {
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.numel(); ++i) {
        const double term = target_side ? -std::log(1.0 - scores[i])
                                        : -std::log(scores[i]);
        acc += mask[i] * term;
    }
    return acc;
}

double scalar_masked(const std::vector<std::vector<Tensor>>& src,
                     const std::vector<std::vector<Tensor>>& tgt,
                     const std::vector<std::vector<Tensor>>& msrc,
                     const std::vector<std::vector<Tensor>>& mtgt) {
    double total = 0.0;
    for (std::size_t l = 0; l < src.size(); ++l) {
        double s = 0.0, t = 0.0;
        std::size_t nnz_s = 0, nnz_t = 0;
        for (std::size_t i = 0; i < src[l].size(); ++i) {
            s += scalar_masked_unnormalized(src[l][i], msrc[l][i], false);
            for (double v : msrc[l][i].data()) nnz_s += v != 0.0;
        }
        for (std::size_t i = 0; i < tgt[l].size(); ++i) {
            t += scalar_masked_unnormalized(tgt[l][i], mtgt[l][i], true);
            for (double v : mtgt[l][i].data()) nnz_t += v != 0.0;
        }
        total += s / std::max<std::size_t>(1, nnz_s) +
                 t / std::max<std::size_t>(1, nnz_t);
    }
    return total;
}

struct LevelSetup {
    std::vector<std::vector<Tensor>> src, tgt, msrc, mtgt;
};

LevelSetup random_setup(Rng& rng, std::size_t levels, std::size_t images,
                        std::size_t pixels) {
    LevelSetup s;
    s.src.resize(levels);
    s.tgt.resize(levels);
    s.msrc.resize(levels);
    s.mtgt.resize(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        for (std::size_t i = 0; i < images; ++i) {
            s.src[l].push_back(random_scores(rng, pixels));
            s.tgt[l].push_back(random_scores(rng, pixels));
            std::vector<double> m1(pixels), m2(pixels);
            for (double& v : m1) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
            for (double& v : m2) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
            s.msrc[l].push_back(Tensor({pixels, 1}, std::move(m1)));
            s.mtgt[l].push_back(Tensor({pixels, 1}, std::move(m2)));
        }
    }
    return s;
}

oaa::LevelScores enter_scores(Graph& g,
                              const std::vector<std::vector<Tensor>>& values) {
    oaa::LevelScores out(values.size());
    for (std::size_t l = 0; l < values.size(); ++l) {
        for (const Tensor& t : values[l]) out[l].push_back(g.constant(t));
    }
    return out;
}

} // namespace

TEST_CASE("zero features and zero final layer score one half") {
    Rng rng(1);
    oaa::DiscriminatorHead head = oaa::DiscriminatorHead::init(4, 8, rng);
    for (auto& v : head.w2.data()) v = 0.0;
    for (auto& v : head.b2.data()) v = 0.0;
    Graph g;
    oaa::HeadVars hv = oaa::enter_head(g, head, false, 1.0);
    Var scores = oaa::discriminate(g, hv, g.constant(Tensor::zeros({6, 4})));
    REQUIRE(scores.value().shape() == std::vector<std::size_t>{6, 1});
    for (double v : scores.value().data()) {
        CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("scores stay strictly inside (0,1) even at extremes") {
    Rng rng(2);
    oaa::DiscriminatorHead head = oaa::DiscriminatorHead::init(3, 4, rng);
    // Blow up the head so the sigmoid saturates in double precision.
    for (auto& v : head.w2.data()) v = 1e4;
    for (auto& v : head.b2.data()) v = 1e4;
    Graph g;
    oaa::HeadVars hv = oaa::enter_head(g, head, false, 1.0);
    Var scores =
        oaa::discriminate(g, hv, g.constant(Tensor::full({4, 3}, 5.0)));
    for (double v : scores.value().data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // And the loss stays finite.
    oaa::LevelScores s{{scores}};
    Graph* gp = &g;
    Var loss = oaa::global_align_loss(*gp, s, s);
    CHECK(std::isfinite(loss.value().item()));
}

TEST_CASE("deterministic scores for fixed seed and input") {
    auto run = [] {
        Rng rng(42);
        oaa::DiscriminatorHead head = oaa::DiscriminatorHead::init(5, 6, rng);
        Rng frng(43);
        std::vector<double> fdata(10 * 5);
        for (double& v : fdata) v = frng.uniform(-1.0, 1.0);
        Graph g;
        oaa::HeadVars hv = oaa::enter_head(g, head, false, 1.0);
        Var scores =
            oaa::discriminate(g, hv, g.constant(Tensor({10, 5}, fdata)));
        return std::vector<double>(scores.value().data().begin(),
                                   scores.value().data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("all-half scores give 2 L ln2") {
    for (std::size_t levels : {1UL, 2UL, 3UL}) {
        Graph g;
        oaa::LevelScores src(levels), tgt(levels);
        for (std::size_t l = 0; l < levels; ++l) {
            src[l].push_back(g.constant(Tensor::full({4, 1}, 0.5)));
            tgt[l].push_back(g.constant(Tensor::full({4, 1}, 0.5)));
        }
        const double loss = oaa::global_align_loss(g, src, tgt).value().item();
        CHECK(loss ==
              doctest::Approx(2.0 * levels * std::log(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("perfect discrimination drives the loss toward zero") {
    Graph g;
    oaa::LevelScores src{{g.constant(Tensor::full({4, 1}, 1.0 - 1e-12))}};
    oaa::LevelScores tgt{{g.constant(Tensor::full({4, 1}, 1e-12))}};
    const double loss = oaa::global_align_loss(g, src, tgt).value().item();
    CHECK(loss < 1e-9);
    CHECK(loss >= 0.0);
}

TEST_CASE("global loss matches the scalar oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const LevelSetup s = random_setup(rng, 1 + rng.below(3),
                                          1 + rng.below(3), 4);
        Graph g;
        const double got =
            oaa::global_align_loss(g, enter_scores(g, s.src),
                                   enter_scores(g, s.tgt))
                .value()
                .item();
        CHECK(got == doctest::Approx(scalar_global(s.src, s.tgt))
                         .epsilon(1e-12));
    }
}

TEST_CASE("empty batches are rejected") {
    Graph g;
    oaa::LevelScores src{{}};
    oaa::LevelScores tgt{{g.constant(Tensor::full({4, 1}, 0.5))}};
    CHECK_THROWS_AS(oaa::global_align_loss(g, src, tgt),
                    std::invalid_argument);
}

TEST_CASE("all-zero masks give zero loss and zero gradient") {
    Rng rng(4);
    Graph g;
    Tensor feat({4, 3}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9,
                         1.0, -1.1, 1.2});
    feat.set_requires_grad(true);
    oaa::DiscriminatorHead head = oaa::DiscriminatorHead::init(3, 4, rng);
    oaa::HeadVars hv = oaa::enter_head(g, head, true, 1.0);
    Var f = g.leaf(feat);
    oaa::LevelScores src{{oaa::discriminate(g, hv, f)}};
    oaa::LevelScores tgt{{oaa::discriminate(
        g, hv, g.constant(Tensor::full({4, 3}, 0.2)))}};
    oaa::LevelMasks zeros{{Tensor::zeros({4, 1})}};
    Var loss = oaa::masked_align_loss(g, src, tgt, zeros, zeros);
    CHECK(loss.value().item() == 0.0);
    const nd::GradientMap grads = g.backward(loss);
    if (const Tensor* gf = grads.find(f)) {
        for (double v : gf->data()) CHECK(v == 0.0);
    }
}

TEST_CASE("all-one masks reduce to the global loss exactly") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t levels = 1 + rng.below(2);
        LevelSetup s = random_setup(rng, levels, 1 + rng.below(3), 4);
        for (auto& lv : s.msrc) {
            for (auto& m : lv) m = Tensor::full(m.shape(), 1.0);
        }
        for (auto& lv : s.mtgt) {
            for (auto& m : lv) m = Tensor::full(m.shape(), 1.0);
        }
        Graph g;
        oaa::LevelScores src = enter_scores(g, s.src);
        oaa::LevelScores tgt = enter_scores(g, s.tgt);
        oaa::LevelMasks msrc(levels), mtgt(levels);
        for (std::size_t l = 0; l < levels; ++l) {
            msrc[l] = s.msrc[l];
            mtgt[l] = s.mtgt[l];
        }
        const double global =
            oaa::global_align_loss(g, src, tgt).value().item();
        const double masked =
            oaa::masked_align_loss(g, src, tgt, msrc, mtgt).value().item();
        CHECK(masked == doctest::Approx(global).epsilon(1e-15));
    }
}

TEST_CASE("all-one masks match global gradients exactly") {
    Rng rng(6);
    Tensor feat({4, 2}, {0.3, -0.4, 0.5, 0.6, -0.7, 0.8, 0.9, -1.0});
    feat.set_requires_grad(true);
    oaa::DiscriminatorHead head = oaa::DiscriminatorHead::init(2, 4, rng);
    const Tensor tgt_feat = Tensor::full({4, 2}, 0.25);

    auto grads_for = [&](bool masked) {
        Graph g;
        oaa::HeadVars hv = oaa::enter_head(g, head, true, 1.0);
        Var f = g.leaf(feat);
        oaa::LevelScores src{{oaa::discriminate(g, hv, f)}};
        oaa::LevelScores tgt{{oaa::discriminate(g, hv, g.constant(tgt_feat))}};
        Var loss;
        if (masked) {
            oaa::LevelMasks ones{{Tensor::full({4, 1}, 1.0)}};
            loss = oaa::masked_align_loss(g, src, tgt, ones, ones);
        } else {
            loss = oaa::global_align_loss(g, src, tgt);
        }
        const Tensor grad = g.backward(loss).at(f);
        return std::vector<double>(grad.data().begin(), grad.data().end());
    };
    CHECK(grads_for(true) == grads_for(false));
}

TEST_CASE("single-pixel mask selects that pixel's term") {
    Graph g;
    const Tensor scores({4, 1}, {0.3, 0.6, 0.8, 0.45});
    oaa::LevelScores src{{g.constant(scores)}};
    oaa::LevelScores tgt{{g.constant(Tensor::full({4, 1}, 0.5))}};
    oaa::LevelMasks msrc{{Tensor({4, 1}, {0, 0, 1, 0})}};
    oaa::LevelMasks mtgt{{Tensor::zeros({4, 1})}};
    const double got =
        oaa::masked_align_loss(g, src, tgt, msrc, mtgt).value().item();
    CHECK(got == doctest::Approx(-std::log(0.8)).epsilon(1e-15));
}

TEST_CASE("masked loss matches the scalar oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t levels = 1 + rng.below(2);
        const LevelSetup s = random_setup(rng, levels, 1 + rng.below(2), 6);
        Graph g;
        oaa::LevelMasks msrc(levels), mtgt(levels);
        for (std::size_t l = 0; l < levels; ++l) {
            msrc[l] = s.msrc[l];
            mtgt[l] = s.mtgt[l];
        }
        const double got =
            oaa::masked_align_loss(g, enter_scores(g, s.src),
                                   enter_scores(g, s.tgt), msrc, mtgt)
                .value()
                .item();
        CHECK(got == doctest::Approx(scalar_masked(s.src, s.tgt, s.msrc,
                                                   s.mtgt))
                         .epsilon(1e-12));
    }
}

TEST_CASE("mask shape mismatch is rejected") {
    Graph g;
    oaa::LevelScores src{{g.constant(Tensor::full({4, 1}, 0.5))}};
    oaa::LevelScores tgt{{g.constant(Tensor::full({4, 1}, 0.5))}};
    oaa::LevelMasks bad{{Tensor::zeros({3, 1})}};
    oaa::LevelMasks ok{{Tensor::zeros({4, 1})}};
    CHECK_THROWS_AS(oaa::masked_align_loss(g, src, tgt, bad, ok),
                    std::invalid_argument);
}

TEST_CASE("oaa combination weights") {
    Graph g;
    Var global = g.constant(Tensor::scalar(0.7));
    Var masked = g.constant(Tensor::scalar(0.3));
    CHECK(oaa::oaa_loss(g, global, masked, 0.0).value().item() ==
          doctest::Approx(0.7));
    CHECK(oaa::oaa_loss(g, global, masked, 1.0).value().item() ==
          doctest::Approx(1.0));
    Var g1 = g.constant(Tensor::scalar(1.0));
    Var m1 = g.constant(Tensor::scalar(1.0));
    CHECK(oaa::oaa_loss(g, g1, m1, 0.1).value().item() ==
          doctest::Approx(1.1));
    CHECK_THROWS_AS(oaa::oaa_loss(g, global, masked, -0.5),
                    std::invalid_argument);
}

TEST_CASE("loss is invariant to image order within a batch") {
    Rng rng(9);
    const LevelSetup s = random_setup(rng, 2, 3, 4);
    Graph g;
    const double forward =
        oaa::global_align_loss(g, enter_scores(g, s.src),
                               enter_scores(g, s.tgt))
            .value()
            .item();
    LevelSetup rev = s;
    for (auto& lv : rev.src) std::reverse(lv.begin(), lv.end());
    for (auto& lv : rev.tgt) std::reverse(lv.begin(), lv.end());
    Graph h;
    const double reversed =
        oaa::global_align_loss(h, enter_scores(h, rev.src),
                               enter_scores(h, rev.tgt))
            .value()
            .item();
    CHECK(forward == doctest::Approx(reversed).epsilon(1e-12));
}

TEST_CASE("unnormalized masked sum is monotone in mask inclusion") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor scores = random_scores(rng, 8);
        std::vector<double> m(8, 0.0);
        for (double& v : m) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        const Tensor mask({8, 1}, std::vector<double>(m));
        const double before =
            scalar_masked_unnormalized(scores, mask, trial % 2 == 0);
        std::vector<double> m2 = m;
        m2[rng.below(8)] = 1.0;
        const Tensor mask2({8, 1}, std::move(m2));
        const double after =
            scalar_masked_unnormalized(scores, mask2, trial % 2 == 0);
        CHECK(after >= before - 1e-15);
    }
}

TEST_CASE("one descent step improves the discriminator, features fight back") {
    Rng rng(12);
    Tensor src_feat({6, 3}, std::vector<double>(18));
    Tensor tgt_feat({6, 3}, std::vector<double>(18));
    for (auto& v : src_feat.data()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : tgt_feat.data()) v = rng.uniform(0.0, 1.5);
    src_feat.set_requires_grad(true);
    oaa::DiscriminatorHead head = oaa::DiscriminatorHead::init(3, 8, rng);

    auto loss_with = [&](const oaa::DiscriminatorHead& h, const Tensor& sf) {
        Graph g;
        oaa::DiscriminatorHead copy = h;
        oaa::HeadVars hv = oaa::enter_head(g, copy, false, 1.0);
        oaa::LevelScores s{{oaa::discriminate(g, hv, g.constant(sf))}};
        oaa::LevelScores t{{oaa::discriminate(g, hv, g.constant(tgt_feat))}};
        return oaa::global_align_loss(g, s, t).value().item();
    };

    Graph g;
    oaa::HeadVars hv = oaa::enter_head(g, head, true, 1.0);
    Var f = g.leaf(src_feat);
    oaa::LevelScores s{{oaa::discriminate(g, hv, f)}};
    oaa::LevelScores t{{oaa::discriminate(g, hv, g.constant(tgt_feat))}};
    Var loss = oaa::global_align_loss(g, s, t);
    const double base = loss.value().item();
    const nd::GradientMap grads = g.backward(loss);

    // Descending the discriminator parameters reduces its classification
    // loss on frozen features.
    const double lr = 1e-3;
    oaa::DiscriminatorHead stepped = head;
    auto apply = [&](Tensor& param, const Tensor& grad) {
        for (std::size_t i = 0; i < param.numel(); ++i) {
            param[i] -= lr * grad[i];
        }
    };
    apply(stepped.w1, grads.at(hv.w1));
    apply(stepped.b1, grads.at(hv.b1));
    apply(stepped.w2, grads.at(hv.w2));
    apply(stepped.b2, grads.at(hv.b2));
    CHECK(loss_with(stepped, src_feat) < base);

    // Applying the (reversed) feature gradient as a descent step moves the
    // features toward worse domain classification.
    Tensor moved = src_feat;
    const Tensor& fg = grads.at(f);
    for (std::size_t i = 0; i < moved.numel(); ++i) {
        moved[i] -= lr * fg[i];
    }
    CHECK(loss_with(head, moved) > base);
}
