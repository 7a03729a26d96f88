#pragma once

#include <string>
#include <vector>

#include "pxl/rng.hpp"
#include "pxl/tensor.hpp"

namespace pxl {

enum class TaskKind { segmentation, normals, edges };

const char* task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);

inline constexpr int kIgnoreLabel = 255;

// Desk-scale pixel-labeling datasets. Labels are recoverable from local
// image content by construction, so a model that fails to reach high
// accuracy is broken, not under-supplied. Images are [3 x H x W] in [0,1]
// plus noise; stored 64-bit so generation is mode-independent.
struct SyntheticDataset {
  TaskKind kind = TaskKind::segmentation;
  i64 size = 32;
  i64 classes = 4;  // segmentation only
  u64 seed = 0;
  std::string generator;
  double pos_rate = 0.0;  // edges: measured positive fraction
  std::vector<Tensor> images;   // [3 x H x W]
  std::vector<Tensor> targets;  // seg [H x W] (0..K-1 or 255); normals [3 x H x W]; edges [H x W]
  std::vector<Tensor> aux;      // edges: underlying label map [H x W]

  i64 count() const { return static_cast<i64>(images.size()); }
};

// K-1 soft-edged shapes (rects and discs) with class-correlated colors over
// a textured background; topmost shape wins; 1-pixel transition band gets
// the ignore label; additive pixel noise sigma 0.05.
SyntheticDataset gen_segmentation(u64 seed, i64 n_images, i64 size = 32, i64 classes = 4);

// Smooth random height field rendered under three fixed directional lights;
// targets are the analytic surface normals.
SyntheticDataset gen_normals(u64 seed, i64 n_images, i64 size = 32);

// Segmentation-style shapes; a pixel is an edge exactly when some
// 4-neighbor carries a lower label (the topmost region owns its boundary).
SyntheticDataset gen_edges(u64 seed, i64 n_images, i64 size = 32);

// Recomputes the edge map from a label map under the dataset's definition.
Tensor edges_from_labels(const Tensor& labels);

// The normals generator's height field, exposed so tests can difference the
// sampled surface against the analytic targets.
struct HeightField {
  double plane_a = 0, plane_b = 0;
  struct Bump {
    double amp, cx, cy, sigma;
  };
  std::vector<Bump> bumps;

  double value(double x, double y) const;
  void gradient(double x, double y, double* gx, double* gy) const;
};
HeightField sample_height_field(Rng& rng, i64 size);

// Normal vector from a height gradient: normalize(-dz/dx, -dz/dy, 1).
void normal_from_gradient(double gx, double gy, double n[3]);

// Dataset directory: manifest.txt plus PXT1 tensors per image.
void save_dataset(const SyntheticDataset& ds, const std::string& dir);
SyntheticDataset load_dataset(const std::string& dir);

// Dispatch on kind with shared defaults.
SyntheticDataset generate_dataset(TaskKind kind, u64 seed, i64 n_images, i64 size, i64 classes);

}  // namespace pxl
