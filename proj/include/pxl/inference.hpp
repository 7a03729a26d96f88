#pragma once

#include <map>

#include "pxl/metrics.hpp"
#include "pxl/model.hpp"

namespace pxl {

// kind-dependent full-resolution output, stored 64-bit:
//   segmentation: [K x H x W] class probabilities (per-pixel sum 1)
//   normals:      [3 x H x W] unit vectors
//   edges:        [H x W] probabilities
struct PredictionMap {
  TaskKind kind = TaskKind::segmentation;
  Tensor map;
};

// Dense prediction of one image in eval mode. When the full H*W x D
// hypercolumn grid would exceed budget_scalars, evaluation falls back to row
// strips; per-pixel independence makes the result bitwise identical either
// way.
PredictionMap predict_dense(Model& model, const Tensor& image, i64 budget_scalars);

// Prediction at a single pixel through the sparse path (for equivalence
// checks); returns the K outputs after the task nonlinearity.
std::vector<double> predict_pixel(Model& model, const Tensor& image, PixelCoord p,
                                  i64 budget_scalars);

// Resize-predict-average over scales; probability maps are renormalized and
// normal maps re-unitized after averaging. Scaled sizes are rounded to the
// nearest multiple of the backbone stride.
PredictionMap predict_multiscale(Model& model, const Tensor& image,
                                 const std::vector<double>& scales, i64 budget_scalars);

// Held-out evaluation: per-task metric map, aggregated dataset-wide
// (confusion counts for segmentation, pooled angular errors for normals, a
// single dataset-wide threshold sweep for edges).
std::map<std::string, double> evaluate(Model& model, const SyntheticDataset& heldout,
                                       const std::vector<double>& scales, i64 budget_scalars);

// The headline scalar (higher is better): mean IoU, pct_30, or best F.
double primary_metric(TaskKind kind, const std::map<std::string, double>& metrics);

}  // namespace pxl
