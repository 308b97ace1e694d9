#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "daal/grad_check.hpp"
#include "daal/ota.hpp"
#include "daal/rng.hpp"

using namespace daal;
using nd::Graph;
using nd::Tensor;
using nd::Var;

namespace {

Tensor random_features(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<double> data(n * d);
    for (double& v : data) v = rng.uniform(-2.0, 2.0);
    return Tensor({n, d}, std::move(data));
}

} // namespace

TEST_CASE("projections in one dimension are plus or minus one") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
        Rng rng(seed);
        const ota::ProjectionSet p = ota::sample_projections(1, 1, rng);
        const double v = p.thetas()[0];
        CHECK((v == 1.0 || v == -1.0));
    }
}

TEST_CASE("sampled projections have unit rows") {
    Rng rng(7);
    const ota::ProjectionSet p = ota::sample_projections(256, 32, rng);
    REQUIRE(p.count() == 256);
    REQUIRE(p.dim() == 32);
    for (std::size_t i = 0; i < 256; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < 32; ++j) {
            sq += p.thetas().at2(i, j) * p.thetas().at2(i, j);
        }
        CHECK(std::fabs(std::sqrt(sq) - 1.0) <= 1e-12);
    }
}

TEST_CASE("directions concentrate around zero mean") {
    for (std::uint64_t seed : {5ULL, 17ULL, 23ULL}) {
        Rng rng(seed);
        const ota::ProjectionSet p = ota::sample_projections(1000, 2, rng);
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < 1000; ++i) {
            mx += p.thetas().at2(i, 0);
            my += p.thetas().at2(i, 1);
        }
        mx /= 1000.0;
        my /= 1000.0;
        CHECK(std::sqrt(mx * mx + my * my) < 0.1);
    }
}

TEST_CASE("identical feature sets have zero loss") {
    Rng rng(11);
    const Tensor f = random_features(rng, 5, 3);
    const ota::ProjectionSet p = ota::sample_projections(8, 3, rng);
    CHECK(ota::sliced_w2_value(f, f, p) == 0.0);
}

TEST_CASE("hand-evaluated single projection case") {
    const Tensor src({1, 2}, {1.0, 0.0});
    const Tensor tgt({1, 2}, {3.0, 0.0});
    const ota::ProjectionSet p =
        ota::ProjectionSet::from_matrix(Tensor({1, 2}, {1.0, 0.0}));
    CHECK(ota::sliced_w2_value(src, tgt, p) == doctest::Approx(4.0));
}

TEST_CASE("loss equals the exact per-projection transport cost") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 8, d = 4, k = 16;
        const Tensor src = random_features(rng, n, d);
        const Tensor tgt = random_features(rng, n, d);
        const ota::ProjectionSet p = ota::sample_projections(k, d, rng);
        double expected = 0.0;
        for (std::size_t ki = 0; ki < k; ++ki) {
            std::vector<double> a(n), b(n);
            for (std::size_t i = 0; i < n; ++i) {
                double pa = 0.0, pb = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    pa += src.at2(i, j) * p.thetas().at2(ki, j);
                    pb += tgt.at2(i, j) * p.thetas().at2(ki, j);
                }
                a[i] = pa;
                b[i] = pb;
            }
            expected += ota::exact_1d_w2(a, b);
        }
        CHECK(ota::sliced_w2_value(src, tgt, p) ==
              doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("exact transport oracle basics") {
    CHECK(ota::exact_1d_w2(std::vector<double>{0, 1},
                           std::vector<double>{0, 1}) == 0.0);
    CHECK(ota::exact_1d_w2(std::vector<double>{0, 2},
                           std::vector<double>{1, 3}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(ota::exact_1d_w2(std::vector<double>{1},
                                     std::vector<double>{1, 2}),
                    std::invalid_argument);
}

TEST_CASE("monotone matching equals brute force and assignment routes") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-3.0, 3.0);
            b[i] = rng.uniform(-3.0, 3.0);
        }
        std::vector<double> sa = a, sb = b;
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        double sorted_cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sorted_cost += (sa[i] - sb[i]) * (sa[i] - sb[i]);
        }
        const double brute = ota::w2_brute_force_1d(a, b);
        const double assign = ota::w2_assignment_1d(a, b);
        CHECK(brute == doctest::Approx(sorted_cost).epsilon(1e-12));
        CHECK(assign == doctest::Approx(brute).epsilon(1e-12));
    }
}

TEST_CASE("shape mismatches are rejected") {
    Rng rng(3);
    Graph g;
    const ota::ProjectionSet p = ota::sample_projections(2, 3, rng);
    Var a = g.constant(random_features(rng, 4, 3));
    Var b = g.constant(random_features(rng, 5, 3));
    CHECK_THROWS_AS(ota::sliced_w2(g, a, b, p), std::invalid_argument);
    Var c = g.constant(random_features(rng, 4, 2));
    CHECK_THROWS_AS(ota::sliced_w2(g, a, c, p), std::invalid_argument);
}

TEST_CASE("symmetry and row-permutation invariance") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(6);
        const std::size_t d = 1 + rng.below(5);
        const Tensor a = random_features(rng, n, d);
        const Tensor b = random_features(rng, n, d);
        const ota::ProjectionSet p =
            ota::sample_projections(1 + rng.below(4), d, rng);
        const double ab = ota::sliced_w2_value(a, b, p);
        CHECK(ab >= 0.0);
        CHECK(ab == ota::sliced_w2_value(b, a, p));

        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::vector<double> pd(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                pd[i * d + j] = a.at2(perm[i], j);
            }
        }
        const Tensor ap({n, d}, pd);
        CHECK(ota::sliced_w2_value(a, ap, p) == 0.0);
        CHECK(ota::sliced_w2_value(ap, b, p) == ab);
    }
}

TEST_CASE("translation response on aligned supports") {
    Rng rng(13);
    const std::size_t n = 6, d = 3;
    const Tensor a = random_features(rng, n, d);
    // Target = row permutation of source: aligned along every projection.
    std::vector<double> pd(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            pd[i * d + j] = a.at2((i + 1) % n, j);
        }
    }
    const ota::ProjectionSet p = ota::sample_projections(1, d, rng);
    const double offset = 0.37;
    std::vector<double> shifted = pd;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            shifted[i * d + j] += offset * p.thetas().at2(0, j);
        }
    }
    const Tensor tgt({n, d}, shifted);
    const double got = ota::sliced_w2_value(a, tgt, p);
    CHECK(got == doctest::Approx(n * offset * offset).epsilon(1e-9));
}

TEST_CASE("gradient of the loss flows into both feature sets") {
    Rng rng(5);
    const std::size_t n = 4, d = 3;
    Tensor src = random_features(rng, n, d);
    Tensor tgt = random_features(rng, n, d);
    const ota::ProjectionSet p = ota::sample_projections(3, d, rng);

    const Tensor tgt_fixed = tgt;
    nd::FiniteDiffReport rep = nd::finite_diff_check(
        [&](Graph& g, Var x) {
            return ota::sliced_w2(g, x, g.constant(tgt_fixed), p);
        },
        src, 1e-6, 1e-4);
    CHECK(rep.pass);

    const Tensor src_fixed = src;
    rep = nd::finite_diff_check(
        [&](Graph& g, Var x) {
            return ota::sliced_w2(g, g.constant(src_fixed), x, p);
        },
        tgt, 1e-6, 1e-4);
    CHECK(rep.pass);
}
