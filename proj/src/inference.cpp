#include "pxl/inference.hpp"

#include <cmath>

#include "pxl/resize.hpp"

namespace pxl {

namespace {

Shape map_shape(TaskKind kind, i64 K, i64 H, i64 W) {
  switch (kind) {
    case TaskKind::segmentation: return {K, H, W};
    case TaskKind::normals: return {3, H, W};
    case TaskKind::edges: return {H, W};
  }
  throw ConfigError("unknown task kind");
}

// Applies the task nonlinearity to logit rows and writes them at pixel
// offset row0 of the [.. x H x W] output map. Computed in the graph's
// scalar type, widened on store.
template <class T>
void finalize_rows(TaskKind kind, const T* logits, i64 rows, i64 K, i64 row0, i64 hw,
                   Tensor& out) {
  for (i64 r = 0; r < rows; ++r) {
    const T* z = logits + r * K;
    const i64 pixel = row0 + r;
    switch (kind) {
      case TaskKind::segmentation: {
        T mx = z[0];
        for (i64 k = 1; k < K; ++k) mx = std::max(mx, z[k]);
        T se = 0;
        for (i64 k = 0; k < K; ++k) se += std::exp(z[k] - mx);
        for (i64 k = 0; k < K; ++k) out.set(k * hw + pixel, std::exp(z[k] - mx) / se);
        break;
      }
      case TaskKind::normals: {
        const T n = std::sqrt(z[0] * z[0] + z[1] * z[1] + z[2] * z[2]);
        if (n < T(1e-12)) {
          out.set(pixel, 0.0);
          out.set(hw + pixel, 0.0);
          out.set(2 * hw + pixel, 1.0);
        } else {
          for (i64 k = 0; k < 3; ++k) out.set(k * hw + pixel, z[k] / n);
        }
        break;
      }
      case TaskKind::edges: {
        T sig;
        if (z[0] >= T(0)) {
          sig = T(1) / (T(1) + std::exp(-z[0]));
        } else {
          const T e = std::exp(z[0]);
          sig = e / (T(1) + e);
        }
        out.set(pixel, sig);
        break;
      }
    }
  }
}

}  // namespace

PredictionMap predict_dense(Model& model, const Tensor& image, i64 budget_scalars) {
  PXL_CHECK(image.ndim() == 3, ShapeError, "predict_dense expects one [C x H x W] image");
  const i64 C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const i64 K = model.head.out_width;
  const i64 D = hypercolumn_dim(model.backbone);

  Graph g(model.mode);
  Tensor input({1, C, H, W}, model.mode);
  for (i64 i = 0; i < image.numel(); ++i) input.set(i, image.at(i));
  FeatureMapSet fmaps = backbone_forward(g, model.backbone, model.params, g.input(std::move(input)),
                                         /*train=*/false);

  i64 rows_per_strip = H;
  if (H * W * D > budget_scalars) rows_per_strip = std::max<i64>(1, budget_scalars / (W * D));

  PredictionMap out;
  out.kind = model.task;
  out.map = Tensor(map_shape(model.task, K, H, W), ScalarMode::f64);
  Rng eval_rng(0);  // dropout is inactive in eval mode
  for (i64 r0 = 0; r0 < H; r0 += rows_per_strip) {
    const i64 r1 = std::min(H, r0 + rows_per_strip);
    const size_t mark = g.size();
    std::vector<PixelRef> pixels;
    pixels.reserve(static_cast<size_t>((r1 - r0) * W));
    for (i64 r = r0; r < r1; ++r)
      for (i64 c = 0; c < W; ++c) pixels.push_back({0, {r, c}});
    HypercolumnMatrix hm = sample_hypercolumn(fmaps, pixels, H, W);
    Var logits = mlp_forward(g, model.head, model.params, hm.features, /*train=*/false, eval_rng);
    dispatch_mode(model.mode, [&](auto tag) {
      using T = decltype(tag);
      finalize_rows<T>(model.task, logits.val().data<T>(), (r1 - r0) * W, K, r0 * W, H * W,
                       out.map);
    });
    g.truncate(mark);
  }
  return out;
}

std::vector<double> predict_pixel(Model& model, const Tensor& image, PixelCoord p,
                                  i64 budget_scalars) {
  (void)budget_scalars;
  const i64 C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const i64 K = model.head.out_width;
  Graph g(model.mode);
  Tensor input({1, C, H, W}, model.mode);
  for (i64 i = 0; i < image.numel(); ++i) input.set(i, image.at(i));
  FeatureMapSet fmaps =
      backbone_forward(g, model.backbone, model.params, g.input(std::move(input)), false);
  HypercolumnMatrix hm = sample_hypercolumn(fmaps, {{0, p}}, H, W);
  Rng eval_rng(0);
  Var logits = mlp_forward(g, model.head, model.params, hm.features, false, eval_rng);
  Tensor one(map_shape(model.task, K, 1, 1), ScalarMode::f64);
  dispatch_mode(model.mode, [&](auto tag) {
    using T = decltype(tag);
    finalize_rows<T>(model.task, logits.val().data<T>(), 1, K, 0, 1, one);
  });
  std::vector<double> out;
  for (i64 i = 0; i < one.numel(); ++i) out.push_back(one.at(i));
  return out;
}

PredictionMap predict_multiscale(Model& model, const Tensor& image,
                                 const std::vector<double>& scales, i64 budget_scalars) {
  PXL_CHECK(!scales.empty(), ContractError, "predict_multiscale needs at least one scale");
  const i64 H = image.dim(1), W = image.dim(2);
  const i64 stride = backbone_max_stride(model.backbone);
  auto snap = [&](double s, i64 extent) {
    const i64 cells = std::max<i64>(1, std::llround(s * static_cast<double>(extent) /
                                                    static_cast<double>(stride)));
    return cells * stride;
  };
  // a single native-resolution scale is exactly dense prediction
  if (scales.size() == 1 && snap(scales[0], H) == H && snap(scales[0], W) == W)
    return predict_dense(model, image, budget_scalars);

  const i64 K = model.head.out_width;
  PredictionMap out;
  out.kind = model.task;
  out.map = Tensor(map_shape(model.task, K, H, W), ScalarMode::f64);
  for (double s : scales) {
    const i64 sh = snap(s, H), sw = snap(s, W);
    Tensor scaled = resize_bilinear_chw(image, sh, sw);
    PredictionMap pm = predict_dense(model, scaled, budget_scalars);
    Tensor back = pm.map.ndim() == 2
                      ? resize_bilinear_chw(pm.map.reshaped({1, sh, sw}), H, W).reshaped({H, W})
                      : resize_bilinear_chw(pm.map, H, W);
    for (i64 i = 0; i < out.map.numel(); ++i) out.map.set(i, out.map.at(i) + back.at(i));
  }
  const double inv = 1.0 / static_cast<double>(scales.size());
  for (i64 i = 0; i < out.map.numel(); ++i) out.map.set(i, out.map.at(i) * inv);

  // close the simplex / re-unitize after averaging
  const i64 hw = H * W;
  if (model.task == TaskKind::segmentation) {
    for (i64 p = 0; p < hw; ++p) {
      double sum = 0;
      for (i64 k = 0; k < K; ++k) sum += out.map.at(k * hw + p);
      if (sum > 0)
        for (i64 k = 0; k < K; ++k) out.map.set(k * hw + p, out.map.at(k * hw + p) / sum);
    }
  } else if (model.task == TaskKind::normals) {
    for (i64 p = 0; p < hw; ++p) {
      const double x = out.map.at(p), y = out.map.at(hw + p), z = out.map.at(2 * hw + p);
      const double n = std::sqrt(x * x + y * y + z * z);
      if (n < 1e-12) {
        out.map.set(p, 0.0);
        out.map.set(hw + p, 0.0);
        out.map.set(2 * hw + p, 1.0);
      } else {
        out.map.set(p, x / n);
        out.map.set(hw + p, y / n);
        out.map.set(2 * hw + p, z / n);
      }
    }
  }
  return out;
}

std::map<std::string, double> evaluate(Model& model, const SyntheticDataset& heldout,
                                       const std::vector<double>& scales, i64 budget_scalars) {
  PXL_CHECK(heldout.count() > 0, ContractError, "empty held-out set");
  const i64 H = heldout.size, W = heldout.size;
  std::map<std::string, double> out;
  switch (model.task) {
    case TaskKind::segmentation: {
      // stack maps vertically: one confusion pass over the whole split
      Tensor pred_all({heldout.count() * H, W}, ScalarMode::f64);
      Tensor gt_all({heldout.count() * H, W}, ScalarMode::f64);
      for (i64 i = 0; i < heldout.count(); ++i) {
        PredictionMap pm =
            predict_multiscale(model, heldout.images[static_cast<size_t>(i)], scales,
                               budget_scalars);
        Tensor labels = argmax_labels(pm.map);
        for (i64 p = 0; p < H * W; ++p) {
          pred_all.set(i * H * W + p, labels.at(p));
          gt_all.set(i * H * W + p, heldout.targets[static_cast<size_t>(i)].at(p));
        }
      }
      SegScore s = miou_and_accuracy(pred_all, gt_all, model.classes, kIgnoreLabel);
      out["miou"] = s.mean_iou;
      out["mean_ac"] = s.mean_class_accuracy;
      break;
    }
    case TaskKind::normals: {
      Tensor pred_all({3, heldout.count() * H, W}, ScalarMode::f64);
      Tensor gt_all({3, heldout.count() * H, W}, ScalarMode::f64);
      const i64 hw_all = heldout.count() * H * W;
      for (i64 i = 0; i < heldout.count(); ++i) {
        PredictionMap pm =
            predict_multiscale(model, heldout.images[static_cast<size_t>(i)], scales,
                               budget_scalars);
        for (i64 k = 0; k < 3; ++k)
          for (i64 p = 0; p < H * W; ++p) {
            pred_all.set(k * hw_all + i * H * W + p, pm.map.at(k * H * W + p));
            gt_all.set(k * hw_all + i * H * W + p,
                       heldout.targets[static_cast<size_t>(i)].at(k * H * W + p));
          }
      }
      NormalStats s = normal_stats(pred_all, gt_all, nullptr);
      out["mean_deg"] = s.mean_deg;
      out["median_deg"] = s.median_deg;
      out["rmse_deg"] = s.rmse_deg;
      out["pct_11_25"] = s.pct_11_25;
      out["pct_22_5"] = s.pct_22_5;
      out["pct_30"] = s.pct_30;
      break;
    }
    case TaskKind::edges: {
      // one dataset-wide threshold sweep
      std::vector<double> prob;
      std::vector<int> gt;
      for (i64 i = 0; i < heldout.count(); ++i) {
        PredictionMap pm =
            predict_multiscale(model, heldout.images[static_cast<size_t>(i)], scales,
                               budget_scalars);
        for (i64 p = 0; p < H * W; ++p) {
          prob.push_back(pm.map.at(p));
          gt.push_back(heldout.targets[static_cast<size_t>(i)].at(p) > 0.5 ? 1 : 0);
        }
      }
      EdgeScore s = edge_fmeasure_flat(prob, gt, 51);
      out["best_f"] = s.best_f;
      out["best_threshold"] = s.best_threshold;
      break;
    }
  }
  return out;
}

double primary_metric(TaskKind kind, const std::map<std::string, double>& metrics) {
  switch (kind) {
    case TaskKind::segmentation: return metrics.at("miou");
    case TaskKind::normals: return metrics.at("pct_30");
    case TaskKind::edges: return metrics.at("best_f");
  }
  throw ConfigError("unknown task kind");
}

}  // namespace pxl
