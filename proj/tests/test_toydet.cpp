#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "daal/hungarian.hpp"
#include "daal/map_eval.hpp"
#include "daal/matcher.hpp"
#include "daal/rng.hpp"
#include "daal/scene.hpp"
#include "daal/train.hpp"

using namespace daal;
using nd::Graph;
using nd::Tensor;
using nd::Var;
using toy::Annotation;
using toy::Scene;

namespace {

toy::SceneConfig small_scene_config() {
    toy::SceneConfig sc;
    sc.width = sc.height = 32;
    sc.max_objects = 3;
    sc.min_size = 6.0;
    sc.max_size = 12.0;
    return sc;
}

cli::RunConfig small_run_config() {
    cli::RunConfig cfg;
    cfg.image_size = 32;
    cfg.level_strides = {4, 8};
    cfg.level_channels = {6, 8};
    cfg.queries = 4;
    cfg.feature_dim = 8;
    cfg.disc_hidden = 4;
    cfg.max_objects = 3;
    cfg.source_scenes = 12;
    cfg.target_scenes = 12;
    cfg.eval_scenes = 6;
    cfg.projections = 8;
    cfg.batch_size = 2;
    cfg.steps = 4;
    cfg.pretrain_steps = 0;
    return cfg;
}

} // namespace

TEST_CASE("zero shift renders byte-identical scenes") {
    const toy::SceneConfig sc = small_scene_config();
    toy::DomainShiftConfig zero;
    zero.seed = 1234; // seed alone must not change anything
    for (std::uint64_t seed : {1ULL, 7ULL, 99ULL}) {
        const Scene src = toy::generate_scene(seed, sc, nullptr);
        const Scene tgt = toy::generate_scene(seed, sc, &zero);
        CHECK(src.pixels == tgt.pixels);
        REQUIRE(src.annotations.size() == tgt.annotations.size());
        CHECK(tgt.domain == toy::Domain::target);
    }
}

TEST_CASE("scenes satisfy their structural invariants") {
    const toy::SceneConfig sc = small_scene_config();
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const Scene s = toy::generate_scene(rng.raw(), sc, nullptr);
        CHECK(s.annotations.size() >= 1);
        CHECK(s.annotations.size() <= sc.max_objects);
        for (const Annotation& a : s.annotations) {
            CHECK(a.box.x_min >= 0.0);
            CHECK(a.box.y_min >= 0.0);
            CHECK(a.box.x_max <= sc.width);
            CHECK(a.box.y_max <= sc.height);
            CHECK(a.box.area() >= 4.0);
            CHECK(a.class_id >= 0);
            CHECK(a.class_id < static_cast<int>(sc.num_classes));
        }
        for (double v : s.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("objects are visible inside their annotation boxes") {
    const toy::SceneConfig sc = small_scene_config();
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Scene s = toy::generate_scene(rng.raw(), sc, nullptr);
        for (const Annotation& a : s.annotations) {
            // Some pixel inside the box deviates strongly from the corners'
            // surroundings (the shape fill).
            double max_dev = 0.0;
            const std::size_t x0 = static_cast<std::size_t>(a.box.x_min);
            const std::size_t x1 = static_cast<std::size_t>(a.box.x_max);
            const std::size_t y0 = static_cast<std::size_t>(a.box.y_min);
            const std::size_t y1 = static_cast<std::size_t>(a.box.y_max);
            for (std::size_t y = y0; y < y1 && y < sc.height; ++y) {
                for (std::size_t x = x0; x < x1 && x < sc.width; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        max_dev = std::max(
                            max_dev, std::fabs(s.pixel(x, y, c) -
                                               s.pixel(0, 0, c)));
                    }
                }
            }
            CHECK(max_dev > 0.1);
        }
    }
}

TEST_CASE("class frequencies follow the uniform sampling distribution") {
    const toy::SceneConfig sc = small_scene_config();
    Rng rng(7);
    std::array<std::size_t, 3> counts{0, 0, 0};
    std::size_t total = 0;
    for (int i = 0; i < 10000; ++i) {
        const Scene s = toy::generate_scene(rng.raw(), sc, nullptr);
        for (const Annotation& a : s.annotations) {
            ++counts[static_cast<std::size_t>(a.class_id)];
            ++total;
        }
    }
    for (std::size_t c = 0; c < 3; ++c) {
        const double freq = static_cast<double>(counts[c]) / total;
        CHECK(freq > 1.0 / 3.0 - 0.05);
        CHECK(freq < 1.0 / 3.0 + 0.05);
    }
}

TEST_CASE("dataset snapshots round-trip") {
    const toy::SceneConfig sc = small_scene_config();
    toy::DomainShiftConfig shift{0.3, 0.1, 1.0, 0.05, 3};
    const toy::Dataset ds = toy::generate_dataset(77, 5, sc, &shift);
    const std::string dir = "/tmp/daal_test_dataset";
    toy::save_dataset(dir, ds);
    const toy::Dataset back = toy::load_dataset(dir);
    REQUIRE(back.scenes.size() == ds.scenes.size());
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        CHECK(back.scenes[i].annotations.size() ==
              ds.scenes[i].annotations.size());
        CHECK(back.scenes[i].seed == ds.scenes[i].seed);
        CHECK(back.scenes[i].domain == ds.scenes[i].domain);
        // 8-bit quantization: within half a level.
        double worst = 0.0;
        for (std::size_t p = 0; p < ds.scenes[i].pixels.size(); ++p) {
            worst = std::max(worst, std::fabs(back.scenes[i].pixels[p] -
                                              ds.scenes[i].pixels[p]));
        }
        CHECK(worst <= 0.5 / 255.0 + 1e-12);
        for (std::size_t a = 0; a < ds.scenes[i].annotations.size(); ++a) {
            CHECK(back.scenes[i].annotations[a].box.x_min ==
                  ds.scenes[i].annotations[a].box.x_min);
            CHECK(back.scenes[i].annotations[a].class_id ==
                  ds.scenes[i].annotations[a].class_id);
        }
    }
}

TEST_CASE("detector forward shapes and determinism") {
    const cli::RunConfig cfg = small_run_config();
    const toy::DetectorSizes sizes = toy::sizes_from_config(cfg);
    Rng rng(3);
    toy::DetectorParams params = toy::DetectorParams::init(sizes, rng);
    const Scene scene = toy::generate_scene(9, toy::scene_config_from(cfg),
                                            nullptr);
    const toy::PatchCache cache = toy::extract_patches(scene, sizes);

    auto run = [&] {
        Graph g;
        toy::DetectorVars vars = toy::enter_detector(g, params, false);
        const toy::ForwardResult f = toy::detector_forward(g, vars, cache,
                                                           sizes);
        return std::vector<double>(f.boxes_cs.value().data().begin(),
                                   f.boxes_cs.value().data().end());
    };
    const auto a = run();
    const auto b = run();
    CHECK(a == b);

    Graph g;
    toy::DetectorVars vars = toy::enter_detector(g, params, false);
    const toy::ForwardResult f = toy::detector_forward(g, vars, cache, sizes);
    CHECK(f.decoder_features.value().shape() ==
          std::vector<std::size_t>{4, 8});
    CHECK(f.boxes_cs.value().shape() == std::vector<std::size_t>{4, 4});
    CHECK(f.cls_probs.value().shape() == std::vector<std::size_t>{4, 4});
    for (double v : f.boxes_cs.value().data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK(f.pyramid.size() == 2);
    CHECK(f.pyramid[0].value().shape() ==
          std::vector<std::size_t>{64, 6});
}

TEST_CASE("zeroed class head gives uniform class scores") {
    const cli::RunConfig cfg = small_run_config();
    const toy::DetectorSizes sizes = toy::sizes_from_config(cfg);
    Rng rng(3);
    toy::DetectorParams params = toy::DetectorParams::init(sizes, rng);
    for (auto& v : params.cls_w.data()) v = 0.0;
    for (auto& v : params.cls_b.data()) v = 0.0;
    const Scene scene = toy::generate_scene(10, toy::scene_config_from(cfg),
                                            nullptr);
    Graph g;
    toy::DetectorVars vars = toy::enter_detector(g, params, false);
    const toy::ForwardResult f = toy::detector_forward(
        g, vars, toy::extract_patches(scene, sizes), sizes);
    for (double v : f.cls_probs.value().data()) {
        CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }
}

TEST_CASE("assignment is optimal where greedy is not") {
    const std::vector<std::vector<double>> cost = {{1.0, 2.0},
                                                   {1.0, 100.0}};
    const auto cols = min_cost_assignment(cost);
    CHECK(cols[0] == 1);
    CHECK(cols[1] == 0);
    CHECK(assignment_cost(cost, cols) == doctest::Approx(3.0));
}

TEST_CASE("assignment matches brute force on random instances") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(6);
        const std::size_t m = n + rng.below(4);
        std::vector<std::vector<double>> cost(n, std::vector<double>(m));
        for (auto& row : cost) {
            for (double& v : row) v = rng.uniform(0.0, 10.0);
        }
        const auto cols = min_cost_assignment(cost);
        std::set<std::size_t> unique(cols.begin(), cols.end());
        CHECK(unique.size() == n);
        CHECK(assignment_cost(cost, cols) ==
              doctest::Approx(brute_force_assignment_cost(cost))
                  .epsilon(1e-12));
    }
}

TEST_CASE("perfect prediction matches with near-zero cost") {
    const Annotation gt{pseudo::Box{8, 8, 16, 16}, 1};
    // Model output in normalized center-size form.
    const Tensor boxes({2, 4}, {0.375, 0.375, 0.25, 0.25, // exact match
                                0.9, 0.9, 0.05, 0.05});
    const Tensor probs({2, 4}, {0.01, 0.97, 0.01, 0.01, //
                                0.25, 0.25, 0.25, 0.25});
    const toy::MatchResult m = toy::match_predictions(
        boxes, probs, std::vector<Annotation>{gt}, 32.0, 32.0);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].first == 0);
    CHECK(m.total_cost < 0.05);
}

TEST_CASE("two objects, four queries: optimal over all twelve assignments") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Annotation> gts = {
            {pseudo::Box{2, 2, 10, 10}, 0},
            {pseudo::Box{18, 18, 30, 30}, 1},
        };
        std::vector<double> bdata(4 * 4), pdata(4 * 4);
        for (double& v : bdata) v = rng.uniform(0.1, 0.9);
        for (double& v : pdata) v = rng.uniform(0.05, 1.0);
        // Normalize probability rows.
        for (std::size_t q = 0; q < 4; ++q) {
            double acc = 0.0;
            for (std::size_t c = 0; c < 4; ++c) acc += pdata[q * 4 + c];
            for (std::size_t c = 0; c < 4; ++c) pdata[q * 4 + c] /= acc;
        }
        const Tensor boxes({4, 4}, bdata);
        const Tensor probs({4, 4}, pdata);
        const toy::MatchResult m =
            toy::match_predictions(boxes, probs, gts, 32.0, 32.0);

        // Brute force over the 12 injections of 2 objects into 4 queries.
        double best = 1e18;
        for (std::size_t q0 = 0; q0 < 4; ++q0) {
            for (std::size_t q1 = 0; q1 < 4; ++q1) {
                if (q0 == q1) continue;
                auto pair_cost = [&](std::size_t q, const Annotation& gt) {
                    const auto cs = toy::annotation_to_cs(gt, 32.0, 32.0);
                    double l1 = 0.0;
                    for (std::size_t c = 0; c < 4; ++c) {
                        l1 += std::fabs(boxes.at2(q, c) - cs[c]);
                    }
                    const pseudo::Box pred{
                        boxes.at2(q, 0) - boxes.at2(q, 2) / 2,
                        boxes.at2(q, 1) - boxes.at2(q, 3) / 2,
                        boxes.at2(q, 0) + boxes.at2(q, 2) / 2,
                        boxes.at2(q, 1) + boxes.at2(q, 3) / 2};
                    const pseudo::Box gtu{cs[0] - cs[2] / 2, cs[1] - cs[3] / 2,
                                          cs[0] + cs[2] / 2, cs[1] + cs[3] / 2};
                    return (1.0 - probs.at2(q, gt.class_id)) + l1 +
                           (1.0 - pseudo::iou(pred, gtu));
                };
                best = std::min(best,
                                pair_cost(q0, gts[0]) + pair_cost(q1, gts[1]));
            }
        }
        CHECK(m.total_cost == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("query permutation permutes the assignment consistently") {
    Rng rng(29);
    std::vector<Annotation> gts = {
        {pseudo::Box{2, 2, 10, 10}, 0},
        {pseudo::Box{18, 18, 30, 30}, 2},
    };
    std::vector<double> bdata(4 * 4), pdata(4 * 4, 0.25);
    for (double& v : bdata) v = rng.uniform(0.1, 0.9);
    const Tensor boxes({4, 4}, bdata);
    const Tensor probs({4, 4}, pdata);
    const toy::MatchResult base =
        toy::match_predictions(boxes, probs, gts, 32.0, 32.0);

    // Reverse the query order.
    std::vector<double> rdata(16);
    for (std::size_t q = 0; q < 4; ++q) {
        for (std::size_t c = 0; c < 4; ++c) {
            rdata[q * 4 + c] = bdata[(3 - q) * 4 + c];
        }
    }
    const toy::MatchResult flipped = toy::match_predictions(
        Tensor({4, 4}, rdata), probs, gts, 32.0, 32.0);
    CHECK(flipped.total_cost == doctest::Approx(base.total_cost)
                                    .epsilon(1e-12));
    for (std::size_t i = 0; i < base.pairs.size(); ++i) {
        CHECK(flipped.pairs[i].first == 3 - base.pairs[i].first);
    }
}

TEST_CASE("more objects than queries is an error") {
    std::vector<Annotation> gts(5, Annotation{pseudo::Box{0, 0, 4, 4}, 0});
    const Tensor boxes({4, 4}, std::vector<double>(16, 0.5));
    const Tensor probs({4, 4}, std::vector<double>(16, 0.25));
    CHECK_THROWS_AS(toy::match_predictions(boxes, probs, gts, 32.0, 32.0),
                    std::invalid_argument);
}

TEST_CASE("detection loss on a hand-built one-object case") {
    // One gt at class 1 matched to query 0 of 2; hand-computed scalar value.
    const Annotation gt{pseudo::Box{8, 8, 24, 24}, 1};
    const double image = 32.0;
    const std::vector<double> bdata = {0.5, 0.5, 0.4, 0.6, //
                                       0.2, 0.8, 0.3, 0.3};
    const std::vector<double> pdata = {0.1, 0.6, 0.2, 0.1, //
                                       0.2, 0.2, 0.2, 0.4};
    Graph g;
    Tensor boxes({2, 4}, bdata);
    Tensor probs({2, 4}, pdata);
    Var vb = g.constant(boxes);
    Var vp = g.constant(probs);
    toy::MatchResult match;
    match.pairs = {{0, 0}};
    Var loss = toy::detection_loss(g, vb, vp, match,
                                   std::vector<Annotation>{gt}, image, image);

    // Scalar recomputation.
    const double ce = -(std::log(0.6) + std::log(0.4)) / 2.0;
    const double gt_cs[4] = {0.5, 0.5, 0.5, 0.5};
    double l1 = 0.0;
    for (int c = 0; c < 4; ++c) l1 += std::fabs(bdata[c] - gt_cs[c]);
    // Pred corners: (0.3,0.2)-(0.7,0.8); gt corners: (0.25,0.25)-(0.75,0.75).
    const double ix = std::min(0.7, 0.75) - std::max(0.3, 0.25);
    const double iy = std::min(0.8, 0.75) - std::max(0.2, 0.25);
    const double inter = ix * iy;
    const double uni = 0.4 * 0.6 + 0.5 * 0.5 - inter;
    const double expected = ce + l1 + (1.0 - inter / uni);
    CHECK(loss.value().item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("iou bounds: identical boxes one, disjoint boxes zero") {
    const pseudo::Box a{0, 0, 10, 10};
    CHECK(pseudo::iou(a, a) == doctest::Approx(1.0));
    const pseudo::Box b{20, 20, 30, 30};
    CHECK(pseudo::iou(a, b) == 0.0);
}

TEST_CASE("perfect predictions give mAP 1 at every threshold") {
    std::vector<toy::GroundTruthBox> gts;
    std::vector<toy::Prediction> preds;
    Rng rng(37);
    for (std::size_t img = 0; img < 5; ++img) {
        for (int k = 0; k < 3; ++k) {
            const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
            const pseudo::Box box{x, y, x + 8, y + 8};
            const int cls = static_cast<int>(rng.below(3));
            gts.push_back({img, cls, box});
            preds.push_back({img, static_cast<std::size_t>(k), cls, 1.0, box});
        }
    }
    const auto thr = toy::default_thresholds();
    const toy::ApReport rep = toy::evaluate_map(preds, gts, thr, 3);
    for (double m : rep.mean_ap) CHECK(m == doctest::Approx(1.0));
    CHECK(rep.ratio80 == doctest::Approx(1.0));
    CHECK(rep.ratio90 == doctest::Approx(1.0));
}

TEST_CASE("no predictions give mAP 0") {
    std::vector<toy::GroundTruthBox> gts = {
        {0, 0, pseudo::Box{0, 0, 8, 8}},
    };
    const auto thr = toy::default_thresholds();
    const toy::ApReport rep =
        toy::evaluate_map(std::vector<toy::Prediction>{}, gts, thr, 3);
    for (double m : rep.mean_ap) CHECK(m == 0.0);
}

TEST_CASE("handcrafted case with one FP and one FN") {
    // Three gt boxes of one class across three images; a perfect detection
    // in image 0, a stray box in image 1, nothing in image 2.
    std::vector<toy::GroundTruthBox> gts = {
        {0, 0, pseudo::Box{0, 0, 10, 10}},
        {1, 0, pseudo::Box{0, 0, 10, 10}},
        {2, 0, pseudo::Box{0, 0, 10, 10}},
    };
    std::vector<toy::Prediction> preds = {
        {0, 0, 0, 0.9, pseudo::Box{0, 0, 10, 10}},
        {1, 0, 0, 0.8, pseudo::Box{20, 20, 30, 30}},
    };
    const std::vector<double> thr = {0.5};
    const toy::ApReport rep = toy::evaluate_map(preds, gts, thr, 1);
    // Precision-recall: (1, 1/3) then (1/2, 1/3); area = 1/3.
    CHECK(rep.mean_ap[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("evaluation is invariant to prediction order at equal confidence") {
    std::vector<toy::GroundTruthBox> gts = {
        {0, 0, pseudo::Box{0, 0, 10, 10}},
        {1, 0, pseudo::Box{4, 4, 14, 14}},
    };
    std::vector<toy::Prediction> preds = {
        {1, 0, 0, 0.7, pseudo::Box{4, 4, 14, 14}},
        {0, 0, 0, 0.7, pseudo::Box{20, 20, 30, 30}},
    };
    const std::vector<double> thr = {0.5};
    const toy::ApReport a = toy::evaluate_map(preds, gts, thr, 1);
    std::swap(preds[0], preds[1]);
    const toy::ApReport b = toy::evaluate_map(preds, gts, thr, 1);
    CHECK(a.mean_ap[0] == b.mean_ap[0]);
}

TEST_CASE("train_step runs, is deterministic, and reports finite losses") {
    const cli::RunConfig cfg = small_run_config();
    auto run_once = [&] {
        toy::TrainState st = toy::init_train_state(cfg);
        const toy::TrainData data = toy::build_train_data(cfg);
        toy::refresh_pseudo_labels(st, data);
        std::vector<std::size_t> src = {0, 1}, tgt = {2, 3};
        toy::LossBundle last;
        for (int i = 0; i < 3; ++i) {
            last = toy::train_step(st, data, src, tgt, true);
        }
        return last;
    };
    const toy::LossBundle a = run_once();
    const toy::LossBundle b = run_once();
    CHECK(a.l_det == b.l_det);
    CHECK(a.l_d == b.l_d);
    CHECK(a.l_d_hat == b.l_d_hat);
    CHECK(a.l_decoder == b.l_decoder);
    CHECK(a.total == b.total);
    CHECK(std::isfinite(a.total));
    CHECK(a.l_det > 0.0);
    CHECK(a.l_d > 0.0);
    CHECK(a.l_decoder > 0.0);
}

TEST_CASE("decoder-alignment loss trends down when optimized alone") {
    // Alignment-only sanity: with the detection influence through a frozen
    // assignment-free config (lambda 0, tiny detector lr on l_det but beta
    // active), the OTA loss should not grow over 200 steps.
    std::vector<double> firsts, lasts;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        cli::RunConfig cfg = small_run_config();
        cfg.seed = seed;
        cfg.placement = cli::Placement::decoder;
        cfg.decoder_mode = cli::DecoderMode::ota;
        cfg.beta = 1.0;
        cfg.lr_detector = 5e-4;
        toy::TrainState st = toy::init_train_state(cfg);
        const toy::TrainData data = toy::build_train_data(cfg);
        Rng rng(seed);
        std::vector<double> ota_curve;
        for (int s = 0; s < 200; ++s) {
            std::vector<std::size_t> src, tgt;
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                src.push_back(rng.below(cfg.source_scenes));
                tgt.push_back(rng.below(cfg.target_scenes));
            }
            ota_curve.push_back(
                toy::train_step(st, data, src, tgt, true).l_decoder);
        }
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 20; ++i) {
            first += ota_curve[i];
            last += ota_curve[200 - 20 + i];
        }
        firsts.push_back(first / 20.0);
        lasts.push_back(last / 20.0);
    }
    double mean_first = 0.0, mean_last = 0.0;
    for (std::size_t i = 0; i < firsts.size(); ++i) {
        mean_first += firsts[i];
        mean_last += lasts[i];
    }
    CHECK(mean_last <= mean_first);
}

TEST_CASE("nan-producing configurations abort with diagnostics") {
    cli::RunConfig cfg = small_run_config();
    toy::TrainState st = toy::init_train_state(cfg);
    const toy::TrainData data = toy::build_train_data(cfg);
    toy::refresh_pseudo_labels(st, data);
    // Poison a parameter so the forward pass produces non-finite values.
    st.det.queries[0] = 1e308;
    st.det.queries[1] = 1e308;
    std::vector<std::size_t> src = {0, 1}, tgt = {0, 1};
    CHECK_THROWS_WITH_AS(toy::train_step(st, data, src, tgt, true),
                         doctest::Contains("train_step aborted"),
                         std::runtime_error);
}
