#pragma once

#include <string>
#include <vector>

#include "pxl/model.hpp"

namespace pxl {

// The three hypercolumn pipelines whose costs Table-style accounting
// compares:
//   dense_upsample - every tap upsampled to full resolution, then
//                    concatenated; the MLP runs on all pixels and the
//                    sampled outputs are masked afterwards.
//   masked_dense   - the dense hypercolumn grid is built, then masked down
//                    to the sampled rows before the MLP.
//   sampled        - on-demand interpolation of only the sampled rows.
enum class PipelineMode { dense_upsample, masked_dense, sampled };

const char* pipeline_name(PipelineMode m);
PipelineMode pipeline_from_name(const std::string& name);

struct MemoryReport {
  PipelineMode mode = PipelineMode::sampled;
  i64 peak_scalars = 0;  // sum of live buffers at the backward-complete instant
  i64 hypercolumn_stage_scalars = 0;  // forward feature buffers + provenance
  std::vector<std::pair<std::string, i64>> breakdown;
  i64 bytes_at(ScalarMode mode_width) const {
    return peak_scalars * (mode_width == ScalarMode::f32 ? 4 : 8);
  }
};

// Analytic count of every buffer a training iteration retains under the
// tape's policy (all op outputs kept for backward, gradients allocated for
// every grad-bearing node). Workspace scratch (im2col) is excluded; it is
// transient.
MemoryReport account_memory(PipelineMode mode, const BackboneSpec& backbone, i64 image_size,
                            i64 images_per_batch, i64 pixels_per_image, const MlpSpec& head);

struct ThroughputReport {
  PipelineMode mode = PipelineMode::sampled;
  double updates_per_second = 0;
  i64 timed_iterations = 0;
  i64 warmup_iterations = 0;
  std::string host;  // cpu model, cores, kernel backend
  std::string config_echo;
};

struct BenchConfig {
  TaskKind task = TaskKind::segmentation;
  i64 classes = 4;
  i64 image_size = 32;
  i64 images_per_batch = 5;
  i64 pixels_per_image = 64;
  i64 warmup = 5;       // raised to 5 if lower
  i64 iterations = 20;  // raised to 20 if lower
  i64 budget_scalars = i64(1) << 28;
  u64 seed = 1;
};

// Wall-clock forward/backward/update rate of one pipeline mode; refuses
// (ResourceError) when the accounting says the mode exceeds the budget.
ThroughputReport measure_throughput(PipelineMode mode, const BenchConfig& cfg);

std::string host_descriptor();

// Peak resident set high-water mark (kB) if the OS exposes it, else -1.
// Informational only; the accounted scalar counts are the comparable
// numbers.
i64 rss_high_water_kb();

}  // namespace pxl
