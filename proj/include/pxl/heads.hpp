#pragma once

#include <array>
#include <string>
#include <vector>

#include "pxl/layers.hpp"
#include "pxl/sampling.hpp"

namespace pxl {

// Per-pixel predictor over hypercolumn rows: fully-connected layers with
// ReLU between and nothing after the last. hidden may be empty (the linear
// baseline); feature_bn batch-normalizes the input rows first, which is what
// makes the linear predictor trainable on naively concatenated taps.
struct MlpSpec {
  std::vector<i64> hidden{128, 128, 128};
  i64 out_width = 1;
  double dropout = 0.5;
  bool feature_bn = false;
  double init_sigma = 1e-3;
  double final_sigma = 1e-3;  // the normals head widens this to 5e-3
};

i64 head_out_width(TaskKind kind, i64 classes);

// Creates "head.fc{i}.w/.b" (+ "head.feat_bn.*" when enabled).
void init_mlp(const MlpSpec& spec, i64 in_dim, ParamSet& params, Rng& rng, ScalarMode mode);

// Rows are independent: no cross-pixel coupling anywhere in the head.
// Dropout draws from `rng` in train mode only.
Var mlp_forward(Graph& g, const MlpSpec& spec, ParamSet& params, Var h, bool train,
                Rng& rng, ParamBinding* binding = nullptr);

namespace ops {

// Mean over non-ignored rows of -log softmax(logits)[label], log-sum-exp
// stabilized with max subtraction. Ignored rows contribute nothing to loss
// or gradient.
Var softmax_xent(Var logits, const std::vector<int>& labels, int ignore_label = -1);

// Mean over rows of ||pred - target||^2 against unit 3-vector targets.
// Predictions are not normalized here; that happens only at evaluation.
Var euclidean_normal_loss(Var pred, const std::vector<std::array<double, 3>>& targets);

// Class-balanced sigmoid cross-entropy:
//   (1/2) [ sum_pos l(z,1)/max(P,1) + sum_neg l(z,0)/max(N,1) ]
// so each class contributes equal gradient mass regardless of skew; a
// perfectly balanced batch reduces to the plain mean.
Var balanced_bce(Var logits, const std::vector<int>& labels);

}  // namespace ops

// The task's loss over a sampled batch.
Var task_loss(Var logits, const PixelBatch& batch);

}  // namespace pxl
