#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "daal/pseudo.hpp"
#include "daal/rng.hpp"

using namespace daal;
using pseudo::Box;
using pseudo::Detection;
using pseudo::LevelGeometry;

TEST_CASE("filtering keeps strictly-above-threshold boxes") {
    std::vector<Detection> dets = {
        {Box{0, 0, 10, 10}, 0.6, 1},
        {Box{5, 5, 20, 20}, 0.4, 2},
    };
    const pseudo::FilterResult r = pseudo::filter_detections(dets, 0.5);
    REQUIRE(r.set.boxes.size() == 1);
    CHECK(r.set.boxes[0].x_max == 10.0);
    CHECK(r.malformed_rejected == 0);

    // Exactly tau is filtered out (strict inequality).
    const pseudo::FilterResult strict = pseudo::filter_detections(
        std::vector<Detection>{{Box{0, 0, 1, 1}, 0.5, 0}}, 0.5);
    CHECK(strict.set.boxes.empty());
}

TEST_CASE("empty input gives an empty set") {
    const pseudo::FilterResult r =
        pseudo::filter_detections(std::vector<Detection>{}, 0.5);
    CHECK(r.set.boxes.empty());
}

TEST_CASE("filtering is class-agnostic") {
    std::vector<Detection> dets;
    for (int c = 0; c < 5; ++c) {
        dets.push_back({Box{0, 0, 4, 4}, 1.0, c});
    }
    const pseudo::FilterResult r = pseudo::filter_detections(dets, 0.5);
    CHECK(r.set.boxes.size() == 5);
}

TEST_CASE("malformed boxes are counted, not fatal") {
    std::vector<Detection> dets = {
        {Box{10, 10, 5, 20}, 0.9, 0}, // x_min >= x_max
        {Box{0, 0, 4, 4}, 0.9, 0},
        {Box{3, 7, 8, 7}, 0.9, 0}, // y_min >= y_max
    };
    const pseudo::FilterResult r = pseudo::filter_detections(dets, 0.5);
    CHECK(r.set.boxes.size() == 1);
    CHECK(r.malformed_rejected == 2);
}

TEST_CASE("filtering is idempotent and order-independent") {
    Rng rng(21);
    std::vector<Detection> dets;
    for (int i = 0; i < 20; ++i) {
        const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
        dets.push_back({Box{x, y, x + rng.uniform(1, 10), y + rng.uniform(1, 10)},
                        rng.uniform(), static_cast<int>(rng.below(3))});
    }
    const auto once = pseudo::filter_detections(dets, 0.5);
    std::vector<Detection> kept;
    for (const Box& b : once.set.boxes) kept.push_back({b, 1.0, 0});
    const auto twice = pseudo::filter_detections(kept, 0.5);
    CHECK(twice.set.boxes.size() == once.set.boxes.size());

    std::vector<Detection> reversed(dets.rbegin(), dets.rend());
    const auto rev = pseudo::filter_detections(reversed, 0.5);
    CHECK(rev.set.boxes.size() == once.set.boxes.size());
}

TEST_CASE("whole-image box sets every cell") {
    pseudo::PseudoBoxSet set;
    set.boxes.push_back(Box{0, 0, 64, 64});
    const std::vector<LevelGeometry> levels = {{16, 16, 4.0}, {8, 8, 8.0}};
    const auto masks = pseudo::rasterize_masks(set, levels);
    for (const auto& mask : masks) {
        for (auto v : mask) CHECK(v == 1);
    }
}

TEST_CASE("empty box set clears every cell") {
    pseudo::PseudoBoxSet set;
    const std::vector<LevelGeometry> levels = {{16, 16, 4.0}};
    const auto masks = pseudo::rasterize_masks(set, levels);
    for (auto v : masks[0]) CHECK(v == 0);
}

TEST_CASE("box (2,2,4,4) at stride 2 covers exactly cell (1,1)") {
    pseudo::PseudoBoxSet set;
    set.boxes.push_back(Box{2, 2, 4, 4});
    const std::vector<LevelGeometry> levels = {{4, 4, 2.0}};
    const auto masks = pseudo::rasterize_masks(set, levels);
    for (std::size_t v = 0; v < 4; ++v) {
        for (std::size_t u = 0; u < 4; ++u) {
            const int want = (u == 1 && v == 1) ? 1 : 0;
            CHECK(masks[0][v * 4 + u] == want);
        }
    }
}

TEST_CASE("ground-truth masks follow the identical path") {
    const std::vector<Box> gt = {Box{2, 2, 4, 4}};
    const std::vector<LevelGeometry> levels = {{4, 4, 2.0}};
    const auto masks = pseudo::source_masks_from_gt(gt, levels);
    CHECK(masks[0][1 * 4 + 1] == 1);
    pseudo::PseudoBoxSet set;
    set.boxes = gt;
    CHECK(masks == pseudo::rasterize_masks(set, levels));
}

TEST_CASE("rasterization agrees with the exhaustive oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const double image = 32.0;
        const double strides[] = {2.0, 4.0, 8.0};
        std::vector<LevelGeometry> levels;
        const std::size_t n_levels = 1 + rng.below(3);
        for (std::size_t l = 0; l < n_levels; ++l) {
            const double s = strides[rng.below(3)];
            levels.push_back(LevelGeometry{static_cast<std::size_t>(image / s),
                                           static_cast<std::size_t>(image / s),
                                           s});
        }
        pseudo::PseudoBoxSet set;
        const std::size_t n = rng.below(5);
        for (std::size_t b = 0; b < n; ++b) {
            const double x0 = rng.uniform(0.0, image - 1.0);
            const double y0 = rng.uniform(0.0, image - 1.0);
            set.boxes.push_back(Box{x0, y0, x0 + rng.uniform(0.5, image - x0),
                                    y0 + rng.uniform(0.5, image - y0)});
        }
        const auto masks = pseudo::rasterize_masks(set, levels);
        for (std::size_t l = 0; l < levels.size(); ++l) {
            for (std::size_t v = 0; v < levels[l].height; ++v) {
                for (std::size_t u = 0; u < levels[l].width; ++u) {
                    const double cx = (u + 0.5) * levels[l].stride;
                    const double cy = (v + 0.5) * levels[l].stride;
                    int want = 0;
                    for (const Box& box : set.boxes) {
                        if (cx >= box.x_min && cx <= box.x_max &&
                            cy >= box.y_min && cy <= box.y_max) {
                            want = 1;
                        }
                    }
                    REQUIRE(masks[l][v * levels[l].width + u] == want);
                }
            }
        }
    }
}

TEST_CASE("adding a box never clears a mask cell") {
    Rng rng(41);
    const std::vector<LevelGeometry> levels = {{8, 8, 4.0}};
    pseudo::PseudoBoxSet set;
    auto random_box = [&] {
        const double x0 = rng.uniform(0.0, 28.0), y0 = rng.uniform(0.0, 28.0);
        return Box{x0, y0, x0 + rng.uniform(1.0, 32.0 - x0),
                   y0 + rng.uniform(1.0, 32.0 - y0)};
    };
    auto masks = pseudo::rasterize_masks(set, levels);
    for (int step = 0; step < 20; ++step) {
        set.boxes.push_back(random_box());
        const auto next = pseudo::rasterize_masks(set, levels);
        for (std::size_t i = 0; i < masks[0].size(); ++i) {
            CHECK(next[0][i] >= masks[0][i]);
        }
        masks = next;
    }
}

TEST_CASE("class relabeling leaves masks unchanged") {
    Rng rng(51);
    std::vector<Detection> dets;
    for (int i = 0; i < 10; ++i) {
        const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
        dets.push_back({Box{x, y, x + 5, y + 5}, 0.9,
                        static_cast<int>(rng.below(3))});
    }
    std::vector<Detection> relabeled = dets;
    for (auto& d : relabeled) d.class_id = 99;
    const std::vector<LevelGeometry> levels = {{8, 8, 4.0}};
    const auto a = pseudo::rasterize_masks(
        pseudo::filter_detections(dets, 0.5).set, levels);
    const auto b = pseudo::rasterize_masks(
        pseudo::filter_detections(relabeled, 0.5).set, levels);
    CHECK(a == b);
}

TEST_CASE("pseudo-label dump format") {
    std::ostringstream os;
    std::vector<Detection> dets = {
        {Box{1.5, 2.25, 10.125, 20.0}, 0.75, 1},
    };
    pseudo::dump_pseudo_record(os, 42, dets);
    CHECK(os.str() == "42\n1.500000 2.250000 10.125000 20.000000 0.750000\n\n");
}
