#pragma once

#include "pxl/heads.hpp"
#include "pxl/hypercolumn.hpp"

namespace pxl {

// Backbone + head parameters plus the specs that shaped them.
struct Model {
  TaskKind task = TaskKind::segmentation;
  i64 classes = 4;
  ScalarMode mode = ScalarMode::f32;
  BackboneSpec backbone;
  MlpSpec head;
  ParamSet params;
};

// Gaussian-initializes every parameter from the "init" stream of `seed`.
// The head's output width follows the task; the normals head widens its
// final-layer sigma 5x.
Model build_model(TaskKind task, i64 classes, BackboneSpec backbone, MlpSpec head, u64 seed,
                  ScalarMode mode);

// [M x 3 x H x W] batch tensor from dataset images, converted to `mode`.
Tensor make_batch_input(const SyntheticDataset& ds, const std::vector<i64>& image_ids,
                        ScalarMode mode);

// backbone -> sparse hypercolumns -> MLP. The one forward definition shared
// by training, evaluation and gradient checking.
Var model_logits(Graph& g, Model& model, Var input, const std::vector<PixelRef>& pixels,
                 bool train, Rng& dropout_rng, ParamBinding* binding = nullptr);

}  // namespace pxl
#include "pxl/gradcheck.hpp"

namespace pxl {

// Central-difference check of the whole pipeline (backbone -> sparse
// hypercolumns -> MLP -> task loss) on a 1x8x8 image with 20 sampled pixels,
// every trainable parameter probed, 64-bit throughout. Dropout and batch
// norm run in train mode with a fixed per-rebuild stream.
GradCheckReport pipeline_grad_check(TaskKind kind, u64 seed, double eps);

}  // namespace pxl
