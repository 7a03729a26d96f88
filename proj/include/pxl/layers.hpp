#pragma once

#include <string>
#include <vector>

#include "pxl/params.hpp"
#include "pxl/rng.hpp"

namespace pxl {

// Conv stack description. Every conv is 3x3 stride-1 with "same" padding
// except the 1x1 head stage; a stride-2 2x2 max-pool follows each non-final
// stage. Layer names are conv{stage}_{index} (1-based) plus "head".
struct StageSpec {
  int num_convs;
  i64 channels;
};

struct BackboneSpec {
  i64 in_channels = 3;
  std::vector<StageSpec> stages{{2, 8}, {2, 16}, {2, 32}, {2, 64}};
  i64 head_channels = 128;
  std::vector<std::string> taps{"conv1_2", "conv2_2", "conv3_2", "conv4_2", "head"};
  bool batchnorm = true;
  double init_sigma = 0.05;
};

// Per-layer bookkeeping the sampler needs: channel count and cumulative
// downsampling factor (input pixels per feature cell).
struct LayerMeta {
  std::string name;
  i64 channels = 0;
  i64 stride_product = 1;
};

std::vector<LayerMeta> backbone_all_layers(const BackboneSpec& spec);
// Metas for spec.taps in tap order; unknown tap name -> ConfigError.
std::vector<LayerMeta> backbone_tap_metas(const BackboneSpec& spec);
i64 hypercolumn_dim(const BackboneSpec& spec);  // sum of tap channels
i64 backbone_max_stride(const BackboneSpec& spec);

// Creates all backbone tensors under "backbone." with Gaussian(0, sigma)
// conv weights, zero biases, identity batch-norm.
void init_backbone(const BackboneSpec& spec, ParamSet& params, Rng& rng, ScalarMode mode);

struct FeatureMapSet {
  std::vector<Var> taps;  // one [B x C_i x H_i x W_i] map per tap, tap order
  std::vector<LayerMeta> metas;
};

// Dense responses at all layers; returns the tapped maps. Records every
// parameter it touches into `binding` when non-null.
FeatureMapSet backbone_forward(Graph& g, const BackboneSpec& spec, ParamSet& params,
                               Var input, bool train, ParamBinding* binding = nullptr);

namespace ops {

// x [B x C x H x W], w [oc x C x kh x kw] (kh, kw odd), b [oc].
Var conv2d(Var x, Var w, Var b, int stride, int pad);

Var maxpool2d(Var x, int k, int stride);

// Normalizes over the batch population per channel: rows of an [S x C]
// matrix or B*H*W cells of a [B x C x H x W] map. Train mode uses batch
// statistics (biased variance) and folds them into the running buffers;
// eval mode is the fixed affine map through the running statistics.
Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
              double eps, double momentum, bool train);

// Inverted dropout: train zeroes with probability rate and scales survivors
// by 1/(1-rate); eval (or rate 0) is the identity.
Var dropout(Var x, double rate, bool train, Rng& rng);

}  // namespace ops

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

}  // namespace pxl
