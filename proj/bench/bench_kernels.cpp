// Serial reference vs OpenMP kernel for each parallel hot spot.
// Thread count follows OMP_NUM_THREADS. benchmark_main.a from the distro is LTO bytecode
// from another compiler version, so main comes from here.

#include <benchmark/benchmark.h>

#include "attnkit/handraise.hpp"
#include "attnkit/ml/importance.hpp"
#include "attnkit/ml/model.hpp"
#include "attnkit/random.hpp"
#include "attnkit/sequences.hpp"
#include "attnkit/synchrony.hpp"
#include "synth.hpp"

using namespace attnkit;

namespace {

synchrony::Scanpath scanpath(Rng& rng, std::size_t n) {
    synchrony::Scanpath sp;
    for (std::size_t i = 0; i < n; ++i)
        sp.fixations.push_back({{1920.0 * uniform01(rng), 1080.0 * uniform01(rng)}, 80.0 + 500.0 * uniform01(rng)});
    return sp;
}

const synchrony::GridSpec kGrid{192, 108, {1920, 1080}};

template <bool Parallel>
void BM_DensityMap(benchmark::State& state) {
    Rng rng(1);
    const auto sp = scanpath(rng, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto m = Parallel ? synchrony::density_map(sp, kGrid, 38.4, synchrony::Weighting::Duration)
                          : synchrony::density_map_serial(sp, kGrid, 38.4, synchrony::Weighting::Duration);
        benchmark::DoNotOptimize(m.values.data());
    }
}
BENCHMARK(BM_DensityMap<false>)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DensityMap<true>)->Arg(200)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_GroupScores(benchmark::State& state) {
    Rng rng(2);
    std::vector<synchrony::Subject> subjects;
    for (int i = 0; i < state.range(0); ++i)
        subjects.push_back({"p" + std::to_string(i), i % 2 ? "MW" : "OnTask", scanpath(rng, 20), std::nullopt});
    synchrony::GroupOptions o;
    o.grid = {64, 36, {1920, 1080}};
    const std::vector<synchrony::Measure> measures{synchrony::Measure::KLD, synchrony::Measure::MMShape,
                                                   synchrony::Measure::MMPosition};
    for (auto _ : state) {
        auto s = Parallel ? synchrony::group_scores("q", subjects, measures, o)
                          : synchrony::group_scores_serial("q", subjects, measures, o);
        benchmark::DoNotOptimize(s.data());
    }
}
BENCHMARK(BM_GroupScores<false>)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroupScores<true>)->Arg(40)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_DistanceMatrix(benchmark::State& state) {
    Rng rng(3);
    std::vector<sequences::ProbeSequence> seqs(static_cast<std::size_t>(state.range(0)));
    for (auto& s : seqs)
        for (int k = 0; k < 20; ++k) s.states.push_back(uniform_index(rng, 4));
    for (auto _ : state) {
        auto d = Parallel ? sequences::distance_matrix(seqs, {}, 4) : sequences::distance_matrix_serial(seqs, {}, 4);
        benchmark::DoNotOptimize(d.values.data());
    }
}
BENCHMARK(BM_DistanceMatrix<false>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistanceMatrix<true>)->Arg(300)->Unit(benchmark::kMillisecond);

struct Xy {
    ml::Matrix x;
    std::vector<int> y;
};

Xy random_xy(std::size_t rows, std::size_t cols) {
    Rng rng(4);
    Xy d{ml::Matrix(rows, cols), std::vector<int>(rows)};
    for (std::size_t r = 0; r < rows; ++r) {
        d.y[r] = uniform01(rng) < 0.25;
        for (std::size_t c = 0; c < cols; ++c) d.x(r, c) = standard_normal(rng) + (c < 4 && d.y[r] ? 1.0 : 0.0);
    }
    return d;
}

template <bool Parallel>
void BM_TrainForest(benchmark::State& state) {
    const auto d = random_xy(1000, 20);
    ml::ModelSpec spec;
    spec.trees = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto m = Parallel ? ml::train(d.x, d.y, spec) : ml::train_serial(d.x, d.y, spec);
        benchmark::DoNotOptimize(&m);
    }
}
BENCHMARK(BM_TrainForest<false>)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainForest<true>)->Arg(100)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_PermutationImportance(benchmark::State& state) {
    const auto d = random_xy(1000, 20);
    ml::ModelSpec spec;
    spec.trees = 50;
    const auto m = ml::train(d.x, d.y, spec);
    const auto repeats = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto imp = Parallel ? ml::permutation_importance(m, d.x, d.y, repeats, 7)
                            : ml::permutation_importance_serial(m, d.x, d.y, repeats, 7);
        benchmark::DoNotOptimize(imp.data());
    }
}
BENCHMARK(BM_PermutationImportance<false>)->Arg(5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PermutationImportance<true>)->Arg(5)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_AnnotateAll(benchmark::State& state) {
    const auto room = testing::synthetic_classroom(5, 2, static_cast<std::size_t>(state.range(0)), 480);
    ml::PipelineSpec spec;
    spec.model.trees = 30;
    const auto model = handraise::train_handraise(handraise::window_dataset({room.videos[0]}, room.labels), spec, 5);
    const auto& video = room.videos[1];
    for (auto _ : state) {
        auto ev = Parallel ? handraise::annotate_all(video.tracklets, model, video.fps)
                           : handraise::annotate_all_serial(video.tracklets, model, video.fps);
        benchmark::DoNotOptimize(ev.data());
    }
}
BENCHMARK(BM_AnnotateAll<false>)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AnnotateAll<true>)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
