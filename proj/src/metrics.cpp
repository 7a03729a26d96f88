#include "pxl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pxl {

SegScore miou_and_accuracy(const Tensor& pred, const Tensor& gt, i64 classes, int ignore_label) {
  PXL_CHECK(pred.shape() == gt.shape(), ShapeError, "label maps differ: ",
            shape_str(pred.shape()), " vs ", shape_str(gt.shape()));
  std::vector<i64> tp(static_cast<size_t>(classes), 0);
  std::vector<i64> fp(static_cast<size_t>(classes), 0);
  std::vector<i64> fn(static_cast<size_t>(classes), 0);
  i64 valid = 0;
  for (i64 i = 0; i < gt.numel(); ++i) {
    const int g = static_cast<int>(gt.at(i));
    if (g == ignore_label) continue;
    const int p = static_cast<int>(pred.at(i));
    PXL_CHECK(g >= 0 && g < classes, ContractError, "gt label ", g, " outside [0,", classes, ")");
    PXL_CHECK(p >= 0 && p < classes, ContractError, "pred label ", p, " outside [0,", classes, ")");
    ++valid;
    if (p == g) {
      ++tp[static_cast<size_t>(g)];
    } else {
      ++fp[static_cast<size_t>(p)];
      ++fn[static_cast<size_t>(g)];
    }
  }
  PXL_CHECK(valid > 0, ContractError, "no non-ignored pixels to score");

  SegScore score;
  score.per_class_iou.assign(static_cast<size_t>(classes),
                             std::numeric_limits<double>::quiet_NaN());
  double iou_sum = 0, acc_sum = 0;
  i64 iou_n = 0, acc_n = 0;
  for (i64 k = 0; k < classes; ++k) {
    const i64 t = tp[static_cast<size_t>(k)], f1 = fp[static_cast<size_t>(k)],
              f2 = fn[static_cast<size_t>(k)];
    if (t + f1 + f2 > 0) {  // present in either map
      const double iou = static_cast<double>(t) / static_cast<double>(t + f1 + f2);
      score.per_class_iou[static_cast<size_t>(k)] = iou;
      iou_sum += iou;
      ++iou_n;
    }
    if (t + f2 > 0) {  // present in gt
      acc_sum += static_cast<double>(t) / static_cast<double>(t + f2);
      ++acc_n;
    }
  }
  score.mean_iou = iou_n > 0 ? iou_sum / static_cast<double>(iou_n) : 0.0;
  score.mean_class_accuracy = acc_n > 0 ? acc_sum / static_cast<double>(acc_n) : 0.0;
  return score;
}

NormalStats normal_stats(const Tensor& pred, const Tensor& gt, const Tensor* mask) {
  PXL_CHECK(pred.shape() == gt.shape() && pred.ndim() == 3 && pred.dim(0) == 3, ShapeError,
            "normal maps must both be [3 x H x W]");
  const i64 H = pred.dim(1), W = pred.dim(2), hw = H * W;
  if (mask)
    PXL_CHECK(mask->ndim() == 2 && mask->dim(0) == H && mask->dim(1) == W, ShapeError,
              "mask must be [H x W]");
  std::vector<double> errs;
  errs.reserve(static_cast<size_t>(hw));
  constexpr double kRadToDeg = 57.29577951308232;
  for (i64 p = 0; p < hw; ++p) {
    if (mask && mask->at(p) <= 0.5) continue;
    double px = pred.at(p), py = pred.at(hw + p), pz = pred.at(2 * hw + p);
    const double gx = gt.at(p), gy = gt.at(hw + p), gz = gt.at(2 * hw + p);
    const double gn = std::sqrt(gx * gx + gy * gy + gz * gz);
    PXL_CHECK(std::fabs(gn - 1.0) <= 1e-4, ContractError,
              "ground-truth normal is not unit length at pixel ", p);
    const double pn = std::sqrt(px * px + py * py + pz * pz);
    double deg;
    if (pn < 1e-12) {
      deg = 90.0;  // undefined direction scores as orthogonal
    } else {
      double dot = (px * gx + py * gy + pz * gz) / pn;
      dot = std::min(1.0, std::max(-1.0, dot));
      deg = std::acos(dot) * kRadToDeg;
    }
    errs.push_back(deg);
  }
  PXL_CHECK(!errs.empty(), ContractError, "no masked pixels to score");

  NormalStats s;
  s.count = static_cast<i64>(errs.size());
  double sum = 0, sq = 0;
  i64 n1 = 0, n2 = 0, n3 = 0;
  for (double e : errs) {
    sum += e;
    sq += e * e;
    n1 += e <= 11.25 ? 1 : 0;
    n2 += e <= 22.5 ? 1 : 0;
    n3 += e <= 30.0 ? 1 : 0;
  }
  const double n = static_cast<double>(errs.size());
  s.mean_deg = sum / n;
  s.rmse_deg = std::sqrt(sq / n);
  s.pct_11_25 = static_cast<double>(n1) / n;
  s.pct_22_5 = static_cast<double>(n2) / n;
  s.pct_30 = static_cast<double>(n3) / n;
  const size_t mid = (errs.size() - 1) / 2;  // lower middle for even counts
  std::nth_element(errs.begin(), errs.begin() + static_cast<std::ptrdiff_t>(mid), errs.end());
  s.median_deg = errs[mid];
  return s;
}

EdgeScore edge_fmeasure_flat(const std::vector<double>& prob, const std::vector<int>& gt,
                             i64 thresholds) {
  PXL_CHECK(prob.size() == gt.size() && !prob.empty(), ShapeError,
            "probability and ground-truth sizes differ");
  PXL_CHECK(thresholds >= 2, ContractError, "need at least 2 thresholds");
  for (double p : prob)
    PXL_CHECK(p >= 0.0 && p <= 1.0, ContractError, "edge probability ", p, " outside [0,1]");
  EdgeScore score;
  i64 positives = 0;
  for (int y : gt) positives += y;
  score.gt_empty = positives == 0;

  for (i64 j = 0; j < thresholds; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(thresholds - 1);
    i64 tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < prob.size(); ++i) {
      const bool p = prob[i] >= t;
      if (p && gt[i] == 1) ++tp;
      else if (p && gt[i] == 0) ++fp;
      else if (!p && gt[i] == 1) ++fn;
    }
    PrPoint pt;
    pt.threshold = t;
    pt.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    pt.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    pt.f = pt.precision + pt.recall > 0
               ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall)
               : 0.0;
    score.curve.push_back(pt);
    if (!score.gt_empty && pt.f > score.best_f) {
      score.best_f = pt.f;
      score.best_threshold = t;
    }
  }
  return score;
}

EdgeScore edge_fmeasure(const Tensor& prob, const Tensor& gt, i64 thresholds) {
  PXL_CHECK(prob.shape() == gt.shape() && prob.ndim() == 2, ShapeError,
            "edge maps must both be [H x W]");
  std::vector<double> p(static_cast<size_t>(prob.numel()));
  std::vector<int> y(static_cast<size_t>(prob.numel()));
  for (i64 i = 0; i < prob.numel(); ++i) {
    p[static_cast<size_t>(i)] = prob.at(i);
    y[static_cast<size_t>(i)] = gt.at(i) > 0.5 ? 1 : 0;
  }
  return edge_fmeasure_flat(p, y, thresholds);
}

Tensor argmax_labels(const Tensor& probs) {
  PXL_CHECK(probs.ndim() == 3, ShapeError, "argmax_labels expects [K x H x W]");
  const i64 K = probs.dim(0), H = probs.dim(1), W = probs.dim(2), hw = H * W;
  Tensor out({H, W}, ScalarMode::f64);
  for (i64 p = 0; p < hw; ++p) {
    i64 best = 0;
    double bv = probs.at(p);
    for (i64 k = 1; k < K; ++k) {
      const double v = probs.at(k * hw + p);
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    out.set(p, static_cast<double>(best));
  }
  return out;
}

}  // namespace pxl
