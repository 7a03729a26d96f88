#pragma once

#include <array>
#include <ostream>
#include <vector>

#include "pxl/hypercolumn.hpp"
#include "pxl/synth.hpp"

namespace pxl {

enum class SampleStrategy { uniform, biased };

const char* strategy_name(SampleStrategy s);
SampleStrategy strategy_from_name(const std::string& name);

// n distinct coordinates, uniform without replacement.
std::vector<PixelCoord> sample_pixels_uniform(i64 h, i64 w, i64 n, Rng& rng);

// ceil(rho*n) coordinates drawn uniformly from positive pixels of a binary
// map, the rest from negatives; a pool that cannot cover its quota spills
// the shortfall to the other pool.
std::vector<PixelCoord> sample_pixels_biased(const Tensor& labels, i64 n, double rho, Rng& rng);

// The sampled pixel set of one SGD iteration: M images x N pixels with
// per-pixel targets attached. pixels[i].image indexes the batch slot, and
// image_ids maps slots back to dataset indices.
struct PixelBatch {
  TaskKind kind = TaskKind::segmentation;
  i64 images_per_batch = 0;
  i64 pixels_per_image = 0;
  std::vector<i64> image_ids;
  std::vector<PixelRef> pixels;
  std::vector<int> class_targets;                   // segmentation / edges
  std::vector<std::array<double, 3>> vec_targets;   // normals
};

// M images drawn without replacement, N distinct pixels per image.
// strategy=biased is the edge task's positive-quota sampler.
PixelBatch build_batch(const SyntheticDataset& ds, i64 images_per_batch, i64 pixels_per_image,
                       SampleStrategy strategy, double rho, Rng& rng);

// Audit dump: image_index,row,col,target columns.
void dump_batch_csv(const PixelBatch& batch, std::ostream& os);

}  // namespace pxl
