#pragma once

#include "pxl/tensor.hpp"

namespace pxl {

// Bilinear resample of a [C x H x W] tensor under the same center-alignment
// convention the hypercolumn sampler uses (src = (dst + 0.5)/scale - 0.5,
// clamped). Equal sizes return a copy.
Tensor resize_bilinear_chw(const Tensor& t, i64 out_h, i64 out_w);

// Nearest-neighbor subsample of an [H x W] (or [C x H x W]) map; used for
// label maps where interpolation would invent classes.
Tensor resize_nearest(const Tensor& t, i64 out_h, i64 out_w);

}  // namespace pxl
