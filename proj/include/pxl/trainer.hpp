#pragma once

#include <optional>
#include <ostream>

#include "pxl/checkpoint.hpp"
#include "pxl/inference.hpp"

namespace pxl {

struct TrainConfig {
  double lr0 = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // empty = default_schedule(iterations): two 10x cuts
  std::vector<std::pair<i64, double>> schedule;
  i64 images_per_batch = 5;   // M
  i64 pixels_per_image = 256; // N
  SampleStrategy strategy = SampleStrategy::uniform;
  double rho = 0.5;
  i64 iterations = 2000;
  u64 seed = 1;
  ScalarMode mode = ScalarMode::f32;
  i64 eval_every = 0;        // 0 = final evaluation only
  i64 checkpoint_every = 0;  // 0 = final checkpoint only
  double resize_half_prob = 0.0;  // per-iteration coin flip to train at half scale
  std::vector<double> eval_scales{1.0};
  i64 eval_budget = i64(1) << 26;
};

void validate(const TrainConfig& cfg);
double lr_at(const TrainConfig& cfg, i64 iteration);

struct TrainLogRow {
  i64 iteration = 0;
  double lr = 0;
  double loss = 0;
  std::vector<std::pair<std::string, double>> metrics;  // present on eval iterations
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  bool aborted = false;
  std::string abort_reason;
  std::map<std::string, double> final_metrics;
};

// The full loop: sample batch -> forward over M images -> sparse
// hypercolumns -> MLP -> loss -> backward -> SGD update. Deterministic per
// (config, seed); a non-finite loss aborts with the last checkpoint intact.
// checkpoint_dir "" disables checkpoints; resume_from restores parameters,
// optimizer state and stream positions so the run continues bit-exactly.
TrainResult train(Model& model, const SyntheticDataset& train_ds,
                  const SyntheticDataset* heldout, const TrainConfig& cfg,
                  const std::string& checkpoint_dir = "", const std::string& resume_from = "",
                  std::ostream* batch_dump = nullptr);

// iteration,lr,loss[,metric columns]; floats rendered shortest round-trip so
// identical runs produce identical bytes.
void write_train_log_csv(const TrainResult& result, std::ostream& os);

std::string format_double(double v);

// Half-resolution view for scale-jittered training: images are bilinearly
// downsampled, label maps subsampled, edge maps recomputed from the
// subsampled regions.
SyntheticDataset halve_dataset(const SyntheticDataset& ds);

}  // namespace pxl
