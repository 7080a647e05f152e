#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cvmcl/filter.hpp"
#include "cvmcl/geo.hpp"
#include "cvmcl/match.hpp"
#include "cvmcl/siamese.hpp"
#include "cvmcl/sim.hpp"

using namespace cvmcl;

namespace {

Tensor3 noise(const embed::ViewDims& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor3 t(d.rows, d.cols, d.channels);
  for (double& x : t.data) {
    x = n(rng);
  }
  return t;
}

const geo::GeoRaster& world() {
  static const geo::GeoRaster w = sim::generate_world(sim::WorldSpec{});
  return w;
}

void BM_EmbedSat(benchmark::State& state) {
  const embed::EncoderConfig cfg;
  const auto model = embed::SiameseModel::create(cfg);
  const Tensor3 x = noise(cfg.sat, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.embed_sat(x));
  }
}
BENCHMARK(BM_EmbedSat);

void BM_BackwardPair(benchmark::State& state) {
  const embed::EncoderConfig cfg;
  const auto model = embed::SiameseModel::create(cfg);
  const embed::LabeledPair p{noise(cfg.ground, 2), noise(cfg.sat, 3), 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(embed::backward(model, p, 8.0));
  }
}
BENCHMARK(BM_BackwardPair);

void BM_CropAtPose(benchmark::State& state) {
  const geo::CropSpec spec;
  const geo::Pose2D pose(64.0, 64.0, 0.7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geo::crop_at_pose(world(), pose, spec));
  }
}
BENCHMARK(BM_CropAtPose);

void BM_FilterStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const double hs = 2.0;
  const filter::OnTheFlyProvider provider(match::pose_feature_embedder(hs));
  const std::vector<double> obs = match::pose_features(geo::Pose2D(60.0, 60.0, 0.3), hs);
  filter::FilterConfig cfg;
  cfg.n_particles = n;
  const filter::ParticleSet start = filter::init_particles({40, 40, 88, 88}, nullptr, 0.0, n, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(filter::step(start, {1.0, 0.05}, 0.5, obs, provider, cfg));
  }
}
BENCHMARK(BM_FilterStep)->Arg(500)->Arg(2000);

void BM_KnnQuery(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<match::IndexEntry> entries(n);
  for (std::size_t i = 0; i < n; ++i) {
    entries[i].pose = geo::Pose2D(static_cast<double>(i), 0.0, 0.0);
    entries[i].embedding.resize(16);
    for (float& v : entries[i].embedding) {
      v = static_cast<float>(g(rng));
    }
  }
  const match::EmbeddingIndex index(std::move(entries), 0);
  std::vector<double> q(16);
  for (double& v : q) {
    v = g(rng);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(match::query(index, q, 10));
  }
}
BENCHMARK(BM_KnnQuery)->Arg(1000)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
