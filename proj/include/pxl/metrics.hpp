#pragma once

#include <map>
#include <string>
#include <vector>

#include "pxl/synth.hpp"

namespace pxl {

struct SegScore {
  double mean_iou = 0;
  double mean_class_accuracy = 0;
  std::vector<double> per_class_iou;  // NaN for classes absent from pred and gt
};

// IoU_k = TP/(TP+FP+FN) over non-ignored pixels; classes absent from both
// maps are excluded from the mean. AC is mean class recall over classes
// present in the ground truth.
SegScore miou_and_accuracy(const Tensor& pred, const Tensor& gt, i64 classes, int ignore_label);

struct NormalStats {
  double mean_deg = 0, median_deg = 0, rmse_deg = 0;
  double pct_11_25 = 0, pct_22_5 = 0, pct_30 = 0;
  i64 count = 0;
};

// Angular error per masked pixel between normalize(pred) and unit gt;
// zero-norm predictions count as 90 degrees. Median is exact selection
// (lower middle for even counts). mask may be null (all pixels).
NormalStats normal_stats(const Tensor& pred, const Tensor& gt, const Tensor* mask);

struct PrPoint {
  double threshold = 0, precision = 0, recall = 0, f = 0;
};

struct EdgeScore {
  double best_f = 0;
  double best_threshold = 0;
  bool gt_empty = false;
  std::vector<PrPoint> curve;
};

// Sweeps `thresholds` evenly spaced cut points (prob >= t is a positive),
// pixel-exact counting; ties on F go to the lower threshold.
EdgeScore edge_fmeasure(const Tensor& prob, const Tensor& gt, i64 thresholds);
EdgeScore edge_fmeasure_flat(const std::vector<double>& prob, const std::vector<int>& gt,
                             i64 thresholds);

// argmax over the class axis of a [K x H x W] probability map.
Tensor argmax_labels(const Tensor& probs);

}  // namespace pxl
