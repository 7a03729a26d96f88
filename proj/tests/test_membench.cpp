#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>

#include "pxl/membench.hpp"

using namespace pxl;

TEST_CASE("sampled-mode accounting is exactly linear in the pixel count") {
  BackboneSpec b;
  const MlpSpec h;
  const i64 taps = i64(backbone_tap_metas(b).size());
  const i64 D = hypercolumn_dim(b);
  const i64 slope_per_pixel = D + 8 * taps;  // features + provenance
  const i64 M = 5;
  MemoryReport r16 = account_memory(PipelineMode::sampled, b, 32, M, 16, h);
  MemoryReport r32 = account_memory(PipelineMode::sampled, b, 32, M, 32, h);
  MemoryReport r64 = account_memory(PipelineMode::sampled, b, 32, M, 64, h);
  CHECK(r32.hypercolumn_stage_scalars - r16.hypercolumn_stage_scalars ==
        16 * M * slope_per_pixel);
  CHECK(r64.hypercolumn_stage_scalars - r32.hypercolumn_stage_scalars ==
        32 * M * slope_per_pixel);
  CHECK(r16.hypercolumn_stage_scalars == 16 * M * slope_per_pixel);
}

TEST_CASE("stage ratio at the bench reference config clears 8x") {
  BackboneSpec b;
  MlpSpec h;
  MemoryReport masked = account_memory(PipelineMode::masked_dense, b, 32, 5, 64, h);
  MemoryReport sampled = account_memory(PipelineMode::sampled, b, 32, 5, 64, h);
  const double ratio = double(masked.hypercolumn_stage_scalars) /
                       double(sampled.hypercolumn_stage_scalars);
  INFO("stage ratio ", ratio);
  CHECK(ratio >= 8.0);

  // N = H*W: the sampled feature matrix equals the dense grid
  MemoryReport ms = account_memory(PipelineMode::masked_dense, b, 32, 5, 1024, h);
  MemoryReport ss = account_memory(PipelineMode::sampled, b, 32, 5, 1024, h);
  const i64 D = hypercolumn_dim(b);
  CHECK(ms.hypercolumn_stage_scalars - 5 * 1024 * D == ss.hypercolumn_stage_scalars);
}

TEST_CASE("mode ordering holds across a randomized sweep") {
  Rng rng(17);
  for (int point = 0; point < 50; ++point) {
    BackboneSpec b;
    b.stages.clear();
    const i64 n_stages = 2 + i64(rng.below(3));
    i64 ch = 8 << rng.below(2);
    for (i64 s = 0; s < n_stages; ++s) {
      b.stages.push_back({1 + int(rng.below(2)), ch});
      ch *= 2;
    }
    b.head_channels = ch;
    b.taps.clear();
    for (i64 s = 0; s < n_stages; ++s)
      b.taps.push_back(cat("conv", s + 1, "_", b.stages[size_t(s)].num_convs));
    b.taps.push_back("head");
    const i64 size = backbone_max_stride(b) * (2 << rng.below(3));
    const i64 M = 1 + i64(rng.below(6));
    const i64 N = 1 + i64(rng.below(u64(size * size - 1)));  // N < H*W
    MlpSpec h;
    h.hidden = {32 << rng.below(3)};
    const auto du = account_memory(PipelineMode::dense_upsample, b, size, M, N, h);
    const auto md = account_memory(PipelineMode::masked_dense, b, size, M, N, h);
    const auto sa = account_memory(PipelineMode::sampled, b, size, M, N, h);
    CHECK(du.peak_scalars >= md.peak_scalars);
    CHECK(md.peak_scalars >= sa.peak_scalars);
    // the breakdown covers the peak
    for (const auto& r : {du, md, sa}) {
      i64 sum = 0;
      for (const auto& [k, v] : r.breakdown) sum += v;
      CHECK(sum >= r.peak_scalars);
    }
  }
}

TEST_CASE("throughput contracts") {
  BenchConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(measure_throughput(PipelineMode::sampled, cfg), ContractError);

  BenchConfig tiny;
  tiny.budget_scalars = 1000;
  try {
    measure_throughput(PipelineMode::dense_upsample, tiny);
    FAIL("expected ResourceError");
  } catch (const ResourceError& e) {
    CHECK(e.required_scalars > 1000);
  }
}

TEST_CASE("sampled beats masked_dense and scales sublinearly in N") {
  BenchConfig cfg;
  cfg.iterations = 20;
  cfg.warmup = 5;
  ThroughputReport sampled = measure_throughput(PipelineMode::sampled, cfg);
  ThroughputReport masked = measure_throughput(PipelineMode::masked_dense, cfg);
  INFO("sampled ", sampled.updates_per_second, " vs masked ", masked.updates_per_second);
  CHECK(sampled.updates_per_second > masked.updates_per_second);
  CHECK(sampled.timed_iterations >= 20);
  CHECK(sampled.warmup_iterations >= 5);
  CHECK(!sampled.host.empty());

  // doubling N grows sampled-mode time sublinearly (conv work dominates)
  BenchConfig dbl = cfg;
  dbl.pixels_per_image = cfg.pixels_per_image * 2;
  ThroughputReport doubled = measure_throughput(PipelineMode::sampled, dbl);
  const double time_ratio = sampled.updates_per_second / doubled.updates_per_second;
  INFO("time ratio for 2x pixels: ", time_ratio);
  CHECK(time_ratio < 2.0);
}

TEST_CASE("pipeline names round trip") {
  for (PipelineMode m :
       {PipelineMode::dense_upsample, PipelineMode::masked_dense, PipelineMode::sampled})
    CHECK(pipeline_from_name(pipeline_name(m)) == m);
  CHECK_THROWS_AS(pipeline_from_name("nope"), ConfigError);
}
