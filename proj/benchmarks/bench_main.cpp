#include <benchmark/benchmark.h>

#include <random>

#include "dvi/boundary.hpp"
#include "dvi/complex.hpp"
#include "dvi/dataset.hpp"
#include "dvi/knn.hpp"
#include "dvi/landscape.hpp"
#include "dvi/subject.hpp"
#include "dvi/visualizer.hpp"

using namespace dvi;

namespace {

/// Blob data, a short subject run and an untrained visualizer, built once.
struct Setup {
  Dataset train, test;
  std::vector<SubjectCheckpoint> ckpts;
  Matrix reps;
  VisualizationModel model;

  Setup() {
    BlobsSpec spec;
    std::tie(train, test) = make_blobs(spec);
    SubjectTrainingParams params;
    params.epochs = 2;
    ckpts = train_subject(train, params);
    reps = features(ckpts.back(), train.inputs);
    std::mt19937_64 rng(1);
    model = make_visualization_model(reps.cols(), 2, CurveParams{}, rng);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_Knn(benchmark::State& state) {
  const Matrix& reps = setup().reps;
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_knn(reps, k));
}
BENCHMARK(BM_Knn)->Arg(5)->Arg(15)->Unit(benchmark::kMillisecond);

void BM_BoundarySynthesis(benchmark::State& state) {
  const Setup& s = setup();
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(synthesize_boundary_set(s.ckpts.back(), s.train, 60, BoundaryParams{}, ++seed));
}
BENCHMARK(BM_BoundarySynthesis)->Unit(benchmark::kMillisecond);

void BM_WeightedComplex(benchmark::State& state) {
  const Setup& s = setup();
  const Matrix boundary = synthesize_boundary_set(s.ckpts.back(), s.train, 60, BoundaryParams{}, 3).points;
  for (auto _ : state) benchmark::DoNotOptimize(build_weighted_complex(s.reps, boundary, 15));
}
BENCHMARK(BM_WeightedComplex)->Unit(benchmark::kMillisecond);

void BM_ProjectSingle(benchmark::State& state) {
  const Setup& s = setup();
  const Matrix one(1, s.reps.cols(), {s.reps.row(0).begin(), s.reps.row(0).end()});
  for (auto _ : state) benchmark::DoNotOptimize(predict(s.ckpts.back(), inverse_project(s.model, project(s.model, one))));
}
BENCHMARK(BM_ProjectSingle)->Unit(benchmark::kMicrosecond);

void BM_Render(benchmark::State& state) {
  const Setup& s = setup();
  const Extent extent = embedding_extent(project(s.model, s.reps));
  RenderParams params;
  params.width = params.height = static_cast<std::size_t>(state.range(0));
  params.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(render_landscape(s.model, s.ckpts.back(), extent, params));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Render)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
