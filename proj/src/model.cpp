#include "pxl/model.hpp"

#include <cmath>

#include "pxl/ops.hpp"

namespace pxl {

Model build_model(TaskKind task, i64 classes, BackboneSpec backbone, MlpSpec head, u64 seed,
                  ScalarMode mode) {
  Model m;
  m.task = task;
  m.classes = classes;
  m.mode = mode;
  m.backbone = std::move(backbone);
  m.head = std::move(head);
  m.head.out_width = head_out_width(task, classes);
  m.head.final_sigma = task == TaskKind::normals ? 5.0 * m.head.init_sigma : m.head.init_sigma;
  Rng init = Rng::stream(seed, "init");
  init_backbone(m.backbone, m.params, init, mode);
  init_mlp(m.head, hypercolumn_dim(m.backbone), m.params, init, mode);
  return m;
}

Tensor make_batch_input(const SyntheticDataset& ds, const std::vector<i64>& image_ids,
                        ScalarMode mode) {
  PXL_CHECK(!image_ids.empty(), ContractError, "empty image batch");
  const i64 M = static_cast<i64>(image_ids.size());
  const Tensor& first = ds.images.at(static_cast<size_t>(image_ids[0]));
  const i64 C = first.dim(0), H = first.dim(1), W = first.dim(2);
  Tensor out({M, C, H, W}, mode);
  for (i64 m = 0; m < M; ++m) {
    const Tensor& img = ds.images.at(static_cast<size_t>(image_ids[static_cast<size_t>(m)]));
    PXL_CHECK(img.shape() == first.shape(), ShapeError, "batch images must share one shape");
    for (i64 i = 0; i < img.numel(); ++i) out.set(m * C * H * W + i, img.at(i));
  }
  return out;
}

Var model_logits(Graph& g, Model& model, Var input, const std::vector<PixelRef>& pixels,
                 bool train, Rng& dropout_rng, ParamBinding* binding) {
  const i64 H = input.shape()[2], W = input.shape()[3];
  FeatureMapSet fmaps = backbone_forward(g, model.backbone, model.params, input, train, binding);
  HypercolumnMatrix hm = sample_hypercolumn(fmaps, pixels, H, W);
  return mlp_forward(g, model.head, model.params, hm.features, train, dropout_rng, binding);
}

}  // namespace pxl

namespace pxl {

GradCheckReport pipeline_grad_check(TaskKind kind, u64 seed, double eps) {
  BackboneSpec b;
  b.in_channels = 1;
  b.stages = {{1, 4}, {1, 6}};
  b.head_channels = 8;
  b.taps = {"conv1_1", "conv2_1", "head"};
  b.batchnorm = true;
  b.init_sigma = 0.4;  // healthy magnitudes keep relu kinks away from the probe step
  MlpSpec h;
  h.hidden = {8};
  h.dropout = 0.5;
  h.init_sigma = 0.4;
  const i64 classes = 3;
  Model model = build_model(kind, classes, b, h, seed, ScalarMode::f64);

  Rng data_rng = Rng::stream(seed, "gradcheck-data");
  Tensor image = Tensor::gaussian({1, 1, 8, 8}, 0.3, 0.5, data_rng, ScalarMode::f64);
  std::vector<PixelRef> pixels;
  for (int i = 0; i < 20; ++i)
    pixels.push_back({0, {i64(data_rng.below(8)), i64(data_rng.below(8))}});

  std::vector<int> class_targets;
  std::vector<std::array<double, 3>> vec_targets;
  for (int i = 0; i < 20; ++i) {
    switch (kind) {
      case TaskKind::segmentation:
        class_targets.push_back(i == 3 ? kIgnoreLabel : int(data_rng.below(u64(classes))));
        break;
      case TaskKind::edges:
        class_targets.push_back(i < 4 ? 1 : int(data_rng.below(2)));
        break;
      case TaskKind::normals: {
        double v[3] = {data_rng.gaussian(0, 1), data_rng.gaussian(0, 1),
                       data_rng.gaussian(0, 1)};
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        vec_targets.push_back({v[0] / n, v[1] / n, v[2] / n});
        break;
      }
    }
  }

  std::vector<NamedParam> params;
  for (auto& e : model.params.entries())
    if (e.trainable) params.push_back({e.name, &e.tensor});

  GradCheckFn fn = [&](bool want, std::vector<std::vector<double>>* grads) {
    Graph g(ScalarMode::f64, true);
    Var input = g.input(image.clone());
    Rng drop(777);  // the dropout mask must repeat identically per rebuild
    ParamBinding binding;
    Var logits = model_logits(g, model, input, pixels, /*train=*/true, drop, &binding);
    Var loss = kind == TaskKind::segmentation
                   ? ops::softmax_xent(logits, class_targets, kIgnoreLabel)
               : kind == TaskKind::edges ? ops::balanced_bce(logits, class_targets)
                                         : ops::euclidean_normal_loss(logits, vec_targets);
    if (want) {
      g.backward(loss);
      grads->clear();
      for (const NamedParam& p : params) {
        bool found = false;
        for (const auto& [name, var] : binding.vars)
          if (name == p.name) {
            grads->push_back(grad_or_zeros(g, var));
            found = true;
            break;
          }
        PXL_CHECK(found, ContractError, "parameter '", p.name, "' never bound in forward");
      }
    }
    return loss.val().at(0);
  };
  return grad_check(fn, params, eps);
}

}  // namespace pxl
