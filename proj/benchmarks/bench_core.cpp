#include <benchmark/benchmark.h>

#include "daal/graph.hpp"
#include "daal/hungarian.hpp"
#include "daal/ota.hpp"
#include "daal/pseudo.hpp"
#include "daal/rng.hpp"
#include "daal/scene.hpp"
#include "daal/train.hpp"

using namespace daal;

namespace {

nd::Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    std::vector<double> data(r * c);
    for (double& v : data) v = rng.uniform(-1.0, 1.0);
    return nd::Tensor({r, c}, std::move(data));
}

void BM_MatmulForwardBackward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    nd::Tensor a = random_matrix(rng, n, n);
    a.set_requires_grad(true);
    const nd::Tensor b = random_matrix(rng, n, n);
    for (auto _ : state) {
        nd::Graph g;
        nd::Var x = g.leaf(a);
        nd::Var root = g.sum(g.matmul(x, g.constant(b)));
        benchmark::DoNotOptimize(g.backward(root));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(32)->Arg(64)->Complexity();

void BM_SlicedW2(benchmark::State& state) {
    const std::size_t k = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    nd::Tensor src = random_matrix(rng, 32, 32);
    nd::Tensor tgt = random_matrix(rng, 32, 32);
    src.set_requires_grad(true);
    const ota::ProjectionSet proj = ota::sample_projections(k, 32, rng);
    for (auto _ : state) {
        nd::Graph g;
        nd::Var s = g.leaf(src);
        nd::Var t = g.constant(tgt);
        nd::Var loss = ota::sliced_w2(g, s, t, proj);
        benchmark::DoNotOptimize(g.backward(loss));
    }
}
BENCHMARK(BM_SlicedW2)->Arg(32)->Arg(128)->Arg(256);

void BM_Exact1dW2(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.uniform(-2.0, 2.0);
        b[i] = rng.uniform(-2.0, 2.0);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(ota::exact_1d_w2(a, b));
    }
}
BENCHMARK(BM_Exact1dW2)->Arg(6)->Arg(8)->Arg(16);

void BM_RasterizeMasks(benchmark::State& state) {
    Rng rng(4);
    pseudo::PseudoBoxSet set;
    for (int i = 0; i < 4; ++i) {
        const double x = rng.uniform(0.0, 40.0), y = rng.uniform(0.0, 40.0);
        set.boxes.push_back(pseudo::Box{x, y, x + 16, y + 16});
    }
    const std::vector<pseudo::LevelGeometry> levels = {{16, 16, 4.0},
                                                       {8, 8, 8.0}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(pseudo::rasterize_masks(set, levels));
    }
}
BENCHMARK(BM_RasterizeMasks);

void BM_SceneGeneration(benchmark::State& state) {
    toy::SceneConfig sc;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(toy::generate_scene(seed++, sc, nullptr));
    }
}
BENCHMARK(BM_SceneGeneration);

void BM_Hungarian(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(5);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost) {
        for (double& v : row) v = rng.uniform(0.0, 10.0);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(min_cost_assignment(cost));
    }
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(16)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
    cli::RunConfig cfg;
    cfg.source_scenes = 16;
    cfg.target_scenes = 16;
    cfg.eval_scenes = 4;
    cfg.projections = static_cast<std::size_t>(state.range(0));
    toy::TrainState st = toy::init_train_state(cfg);
    const toy::TrainData data = toy::build_train_data(cfg);
    toy::refresh_pseudo_labels(st, data);
    const std::vector<std::size_t> src = {0, 1, 2, 3}, tgt = {4, 5, 6, 7};
    for (auto _ : state) {
        benchmark::DoNotOptimize(toy::train_step(st, data, src, tgt, true));
    }
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
