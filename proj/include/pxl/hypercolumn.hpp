#pragma once

#include <memory>
#include <vector>

#include "pxl/layers.hpp"

namespace pxl {

// Pixel location at input-image resolution.
struct PixelCoord {
  i64 row = 0;
  i64 col = 0;
};

// A sampled pixel within a batch: image index into the batch tensor plus the
// coordinate.
struct PixelRef {
  i64 image = 0;
  PixelCoord coord;
};

// Fractional feature-map position of an image pixel under the
// center-alignment map u = (p + 0.5)/s - 0.5, clamped to the map border.
// Stride-1 taps reduce to the identity. Isolated here because the alignment
// convention is the one detail everything downstream depends on.
struct FracCoord {
  double u = 0;  // row direction
  double v = 0;  // col direction
};
FracCoord feature_coords(PixelCoord p, const LayerMeta& meta, i64 image_h, i64 image_w,
                         i64 map_h, i64 map_w);

// Interpolation bookkeeping kept from forward to backward: for every
// (row, tap) the 4 source cells and their bilinear weights. 8 scalars per
// row and tap; counted as part of the sampled-mode memory footprint.
struct Provenance {
  struct Corner {
    i64 image = 0;
    i64 idx[4] = {0, 0, 0, 0};  // spatial offsets within one [H_i x W_i] plane
    double w[4] = {0, 0, 0, 0};
  };
  std::vector<LayerMeta> metas;  // per tap
  std::vector<i64> map_h, map_w;
  std::vector<i64> col_offset;   // column of each tap's slice in the row
  i64 rows = 0;
  i64 dim = 0;
  i64 image_h = 0, image_w = 0;
  std::vector<Corner> corners;  // rows x taps, row-major

  i64 scalar_count() const { return rows * static_cast<i64>(metas.size()) * 8; }
};

struct HypercolumnMatrix {
  Var features;  // [rows x D]
  std::shared_ptr<Provenance> prov;
};

// On-demand sparse hypercolumn extraction: one row per sampled pixel, the
// concatenation over taps (spec order) of bilinear reads at feature_coords.
// Cost is O(|P| * D). The backward rule scatters each row back onto the 4
// source cells per tap with the recorded weights.
HypercolumnMatrix sample_hypercolumn(const FeatureMapSet& fmaps,
                                     const std::vector<PixelRef>& pixels,
                                     i64 image_h, i64 image_w);

// All pixels of one batch image in row-major order, same code path as
// sample_hypercolumn (rows are bitwise identical to sampled rows). Refuses
// to materialize more than budget_scalars.
HypercolumnMatrix dense_hypercolumn(const FeatureMapSet& fmaps, i64 image_index,
                                    i64 image_h, i64 image_w, i64 budget_scalars);

// Standalone scatter of an upstream [rows x D] gradient onto per-tap
// feature-map gradients [B x C_i x H_i x W_i]; additive across rows. This is
// the exact rule the sampler's backward uses.
std::vector<Tensor> scatter_gradient(const Tensor& grad, const Provenance& prov,
                                     i64 batch_images);

}  // namespace pxl
