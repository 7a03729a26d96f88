#pragma once

#include "pxl/trainer.hpp"

namespace pxl {

// One grid point of a scripted experiment: task, data geometry and the full
// training recipe. Arms of an ablation share the dataset seed so seed-paired
// comparisons see identical data.
struct AblationArm {
  std::string label;
  TaskKind task = TaskKind::segmentation;
  i64 image_size = 32;
  i64 classes = 4;
  i64 n_train = 60;
  i64 n_heldout = 12;
  u64 data_seed = 100;
  BackboneSpec backbone;
  MlpSpec head;
  TrainConfig train;
};

struct AblationRow {
  std::string ablation;
  std::string arm;
  u64 seed = 0;
  std::string config_hash;
  std::string status = "ok";  // or "failed: <reason>"
  double final_loss = 0;      // mean loss over the last tenth of iterations
  double primary = 0;         // task's headline metric, higher is better
  std::map<std::string, double> metrics;
  std::vector<std::pair<i64, double>> loss_curve;  // empty when served from cache
};

struct AblationOutcome {
  std::string name;
  std::vector<AblationRow> rows;

  std::vector<double> arm_values(const std::string& arm, bool primary) const;
  double arm_median(const std::string& arm, bool primary) const;
  // rows for one seed across two arms (paired comparisons)
  const AblationRow* find(const std::string& arm, u64 seed) const;
};

std::vector<std::string> registered_ablations();

// The named grids. iterations scales every arm's training budget.
std::vector<AblationArm> ablation_arms(const std::string& name, i64 iterations);

// Runs every (arm x seed) point, each as an independent job on a small
// worker pool; single rows failing are recorded and the grid continues.
// Completed rows are cached in out_dir/results.csv by config hash, so a
// rerun reuses them and reproduces the same summary. Writes results.csv,
// summary.csv, per-run loss curves and SVG charts into out_dir.
AblationOutcome run_grid(const std::string& name, const std::vector<AblationArm>& arms,
                         const std::string& out_dir, i64 seeds, i64 threads);

// run_grid over the registered grid of that name.
AblationOutcome run_ablation(const std::string& name, const std::string& out_dir, i64 seeds,
                             i64 iterations, i64 threads);

// Deterministic hash of everything that shapes one run.
std::string arm_config_hash(const AblationArm& arm, u64 seed);

}  // namespace pxl
