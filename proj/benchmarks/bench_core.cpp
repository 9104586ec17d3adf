#include <benchmark/benchmark.h>

#include <vector>

#include "detfuse/eval.hpp"
#include "detfuse/fusion.hpp"
#include "detfuse/nms.hpp"
#include "detfuse/random.hpp"
#include "detfuse/synthetic.hpp"
#include "detfuse/weights.hpp"

namespace {

using namespace detfuse;

std::vector<Detection> random_detections(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Detection> dets;
  dets.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Detection det;
    det.image_id = "img";
    det.detector_id = static_cast<int>(rng.uniform_index(3));
    det.class_id = static_cast<int>(rng.uniform_index(4));
    det.score = rng.uniform(0.05, 1.0);
    const double x1 = rng.uniform(0.0, 600.0);
    const double y1 = rng.uniform(0.0, 440.0);
    det.box = BoundingBox{x1, y1, x1 + rng.uniform(10.0, 120.0), y1 + rng.uniform(10.0, 120.0)};
    dets.push_back(std::move(det));
  }
  return dets;
}

void BM_NmsFuse(benchmark::State& state) {
  const auto dets = random_detections(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) {
    auto kept = nms_fuse(dets, NmsConfig{});
    benchmark::DoNotOptimize(kept);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NmsFuse)->Range(8, 1024)->Complexity();

void BM_EnsembleFuse(benchmark::State& state) {
  const auto dets = random_detections(static_cast<int>(state.range(0)), 2);
  const WeightVector w = WeightVector::uniform(3);
  const FusionConfig config;
  for (auto _ : state) {
    auto fused = ensemble_fuse(dets, w, config);
    benchmark::DoNotOptimize(fused);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EnsembleFuse)->Range(8, 1024)->Complexity();

void BM_AveragePrecision(benchmark::State& state) {
  ImageGroundTruthSpec spec;
  spec.image_count = static_cast<int>(state.range(0));
  const DatasetBundle gt = make_image_ground_truth(spec, 3);
  std::vector<DetectorProfile> profiles(1);
  profiles[0].jitter_sigma = 0.05;
  profiles[0].fp_rate = 1.0;
  const DatasetBundle bundle = generate(gt, profiles, 3);
  for (auto _ : state) {
    const double ap =
        average_precision(bundle.detections, bundle.ground_truth, 0.5, 0.05);
    benchmark::DoNotOptimize(ap);
  }
}
BENCHMARK(BM_AveragePrecision)->Range(16, 256);

void BM_SgdEpochs(benchmark::State& state) {
  ImageGroundTruthSpec spec;
  spec.image_count = 100;
  const DatasetBundle gt = make_image_ground_truth(spec, 4);
  std::vector<DetectorProfile> profiles(3);
  profiles[0].jitter_sigma = 0.03;
  profiles[1].jitter_sigma = 0.05;
  profiles[2].jitter_sigma = 0.08;
  const DatasetBundle bundle = generate(gt, profiles, 4);
  std::vector<std::string> ids;
  for (const auto& image : bundle.images) {
    ids.push_back(image.image_id);
  }
  const auto pairs = build_pairs(bundle, ids, 0.5);
  TrainConfig config;
  config.learning_rate = 0.01;
  config.max_epochs = static_cast<int>(state.range(0));
  config.patience = config.max_epochs;
  for (auto _ : state) {
    auto report = train_weights(pairs, config);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_SgdEpochs)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
