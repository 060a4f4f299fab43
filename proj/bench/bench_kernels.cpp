// OpenMP kernels against their serial references: splat render, voxel fusion
// and memory updates.

#include "gsmem/fusion.hpp"
#include "gsmem/pipeline.hpp"
#include "gsmem/splat.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace gsmem;

std::vector<GaussianPrimitive> random_primitives(std::size_t n, const GridGeometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(0.03, 0.12);
  std::normal_distribution<double> z(0.0, 2.0);
  const Vec3 extent = g.voxel_size * Vec3(g.dims[0], g.dims[1], g.dims[2]);
  std::vector<GaussianPrimitive> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd logits(kDefaultClasses - 1);
    for (auto& l : logits) l = z(rng);
    out.push_back(make_primitive(g.origin + extent.cwiseProduct(Vec3(u(rng), u(rng), u(rng))),
                                 Vec3(s(rng), s(rng), s(rng)), Quat(z(rng), z(rng), z(rng), z(rng)), u(rng),
                                 logits));
  }
  return out;
}

void BM_RenderSerial(benchmark::State& state) {
  const GridGeometry g = default_geometry();
  const auto prims = random_primitives(static_cast<std::size_t>(state.range(0)), g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(render_field_serial(g, prims));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.voxel_count()));
}

void BM_RenderParallel(benchmark::State& state) {
  const GridGeometry g = default_geometry();
  const auto prims = random_primitives(static_cast<std::size_t>(state.range(0)), g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(render_field(g, prims));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.voxel_count()));
}

void BM_Fuse(benchmark::State& state) {
  const GridGeometry g = default_geometry();
  const auto prims = random_primitives(static_cast<std::size_t>(state.range(0)), g, 2);
  const Eigen::MatrixXd features = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(prims.size()), 32);
  const std::vector<double> conf = confidence_batch(prims);
  const auto cells = assign_voxels(prims, Vec3::Zero(), 0.12);
  const auto w = fusion_weights(conf, cells, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fuse(prims, features, w, cells));
}

void BM_EmbodiedEpisode(benchmark::State& state) {
  RunConfig cfg;
  cfg.frames = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_embodied(cfg));
}

}  // namespace

BENCHMARK(BM_RenderSerial)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderParallel)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Fuse)->Arg(10000)->Arg(40000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmbodiedEpisode)->Arg(5)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
