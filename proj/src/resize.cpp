#include "pxl/resize.hpp"

#include <cmath>

namespace pxl {

Tensor resize_bilinear_chw(const Tensor& t, i64 out_h, i64 out_w) {
  PXL_CHECK(t.ndim() == 3, ShapeError, "resize_bilinear_chw expects [C x H x W], got ",
            shape_str(t.shape()));
  const i64 C = t.dim(0), H = t.dim(1), W = t.dim(2);
  if (out_h == H && out_w == W) return t;
  PXL_CHECK(out_h >= 1 && out_w >= 1, ShapeError, "resize target must be positive");
  Tensor out({C, out_h, out_w}, t.mode());
  const double sr = static_cast<double>(H) / static_cast<double>(out_h);
  const double sc = static_cast<double>(W) / static_cast<double>(out_w);
  for (i64 r = 0; r < out_h; ++r) {
    double u = (static_cast<double>(r) + 0.5) * sr - 0.5;
    u = std::min(std::max(u, 0.0), static_cast<double>(H - 1));
    const i64 r0 = static_cast<i64>(std::floor(u));
    const i64 r1 = std::min(r0 + 1, H - 1);
    const double fr = u - static_cast<double>(r0);
    for (i64 c = 0; c < out_w; ++c) {
      double v = (static_cast<double>(c) + 0.5) * sc - 0.5;
      v = std::min(std::max(v, 0.0), static_cast<double>(W - 1));
      const i64 c0 = static_cast<i64>(std::floor(v));
      const i64 c1 = std::min(c0 + 1, W - 1);
      const double fc = v - static_cast<double>(c0);
      for (i64 ch = 0; ch < C; ++ch) {
        const double v00 = t.at((ch * H + r0) * W + c0);
        const double v01 = t.at((ch * H + r0) * W + c1);
        const double v10 = t.at((ch * H + r1) * W + c0);
        const double v11 = t.at((ch * H + r1) * W + c1);
        out.set((ch * out_h + r) * out_w + c,
                (1 - fr) * (1 - fc) * v00 + (1 - fr) * fc * v01 + fr * (1 - fc) * v10 +
                    fr * fc * v11);
      }
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& t, i64 out_h, i64 out_w) {
  PXL_CHECK(t.ndim() == 2 || t.ndim() == 3, ShapeError,
            "resize_nearest expects [H x W] or [C x H x W]");
  const bool chw = t.ndim() == 3;
  const i64 C = chw ? t.dim(0) : 1;
  const i64 H = chw ? t.dim(1) : t.dim(0);
  const i64 W = chw ? t.dim(2) : t.dim(1);
  if (out_h == H && out_w == W) return t;
  Tensor out(chw ? Shape{C, out_h, out_w} : Shape{out_h, out_w}, t.mode());
  const double sr = static_cast<double>(H) / static_cast<double>(out_h);
  const double sc = static_cast<double>(W) / static_cast<double>(out_w);
  for (i64 r = 0; r < out_h; ++r) {
    i64 ir = static_cast<i64>(std::floor((static_cast<double>(r) + 0.5) * sr));
    ir = std::min(ir, H - 1);
    for (i64 c = 0; c < out_w; ++c) {
      i64 ic = static_cast<i64>(std::floor((static_cast<double>(c) + 0.5) * sc));
      ic = std::min(ic, W - 1);
      for (i64 ch = 0; ch < C; ++ch)
        out.set((ch * out_h + r) * out_w + c, t.at((ch * H + ir) * W + ic));
    }
  }
  return out;
}

}  // namespace pxl
