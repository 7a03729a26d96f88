#include "pxl/hypercolumn.hpp"

#include <cmath>

#include "pxl/kernels.hpp"

namespace pxl {

FracCoord feature_coords(PixelCoord p, const LayerMeta& meta, i64 image_h, i64 image_w,
                         i64 map_h, i64 map_w) {
  PXL_CHECK(p.row >= 0 && p.row < image_h && p.col >= 0 && p.col < image_w, ContractError,
            "pixel (", p.row, ",", p.col, ") outside ", image_h, "x", image_w, " image");
  const double s = static_cast<double>(meta.stride_product);
  FracCoord f;
  f.u = (static_cast<double>(p.row) + 0.5) / s - 0.5;
  f.v = (static_cast<double>(p.col) + 0.5) / s - 0.5;
  f.u = std::min(std::max(f.u, 0.0), static_cast<double>(map_h - 1));
  f.v = std::min(std::max(f.v, 0.0), static_cast<double>(map_w - 1));
  return f;
}

namespace {

Provenance::Corner make_corner(i64 image, FracCoord f, i64 map_h, i64 map_w) {
  const i64 r0 = static_cast<i64>(std::floor(f.u));
  const i64 c0 = static_cast<i64>(std::floor(f.v));
  const i64 r1 = std::min(r0 + 1, map_h - 1);
  const i64 c1 = std::min(c0 + 1, map_w - 1);
  const double wr = f.u - static_cast<double>(r0);
  const double wc = f.v - static_cast<double>(c0);
  Provenance::Corner corner;
  corner.image = image;
  corner.idx[0] = r0 * map_w + c0;
  corner.idx[1] = r0 * map_w + c1;
  corner.idx[2] = r1 * map_w + c0;
  corner.idx[3] = r1 * map_w + c1;
  corner.w[0] = (1.0 - wr) * (1.0 - wc);
  corner.w[1] = (1.0 - wr) * wc;
  corner.w[2] = wr * (1.0 - wc);
  corner.w[3] = wr * wc;
  return corner;
}

template <class T>
void gather_rows(Graph& g, const FeatureMapSet& fmaps, const Provenance& prov, T* out) {
  const size_t taps = prov.metas.size();
  for (i64 r = 0; r < prov.rows; ++r) {
    T* row = out + r * prov.dim;
    for (size_t t = 0; t < taps; ++t) {
      const Provenance::Corner& c = prov.corners[static_cast<size_t>(r) * taps + t];
      const Tensor& map = g.value(fmaps.taps[t].id);
      const i64 ch = prov.metas[t].channels;
      const i64 plane = prov.map_h[t] * prov.map_w[t];
      const T w[4] = {static_cast<T>(c.w[0]), static_cast<T>(c.w[1]), static_cast<T>(c.w[2]),
                      static_cast<T>(c.w[3])};
      kernels::bilerp_gather(map.data<T>() + c.image * ch * plane, plane, ch, c.idx, w,
                             row + prov.col_offset[t]);
    }
  }
}

template <class T>
void scatter_rows(const T* grad, const Provenance& prov, size_t tap,
                  i64 channels, i64 plane, T* tap_grad) {
  const size_t taps = prov.metas.size();
  for (i64 r = 0; r < prov.rows; ++r) {
    const Provenance::Corner& c = prov.corners[static_cast<size_t>(r) * taps + tap];
    const T w[4] = {static_cast<T>(c.w[0]), static_cast<T>(c.w[1]), static_cast<T>(c.w[2]),
                    static_cast<T>(c.w[3])};
    kernels::bilerp_scatter(tap_grad + c.image * channels * plane, plane, channels, c.idx, w,
                            grad + r * prov.dim + prov.col_offset[tap]);
  }
}

}  // namespace

HypercolumnMatrix sample_hypercolumn(const FeatureMapSet& fmaps,
                                     const std::vector<PixelRef>& pixels,
                                     i64 image_h, i64 image_w) {
  PXL_CHECK(!fmaps.taps.empty(), ContractError, "sample_hypercolumn needs at least one tap");
  PXL_CHECK(!pixels.empty(), ContractError, "sample_hypercolumn needs at least one pixel");
  Graph& g = *fmaps.taps[0].g;
  const i64 batch = fmaps.taps[0].shape()[0];

  auto prov = std::make_shared<Provenance>();
  prov->metas = fmaps.metas;
  prov->rows = static_cast<i64>(pixels.size());
  prov->image_h = image_h;
  prov->image_w = image_w;
  i64 dim = 0;
  for (size_t t = 0; t < fmaps.taps.size(); ++t) {
    PXL_CHECK(fmaps.taps[t].g == &g, ContractError, "feature maps from different graphs");
    const Shape& s = fmaps.taps[t].shape();
    PXL_CHECK(s.size() == 4 && s[0] == batch, ContractError, "tap ", t, " has shape ",
              shape_str(s), ", expected a batch of ", batch);
    PXL_CHECK(s[1] == fmaps.metas[t].channels, ContractError, "tap ", t,
              " channel count does not match its meta");
    prov->map_h.push_back(s[2]);
    prov->map_w.push_back(s[3]);
    prov->col_offset.push_back(dim);
    dim += s[1];
  }
  prov->dim = dim;

  prov->corners.reserve(pixels.size() * fmaps.taps.size());
  for (const PixelRef& p : pixels) {
    PXL_CHECK(p.image >= 0 && p.image < batch, ContractError, "pixel image index ", p.image,
              " outside batch of ", batch);
    for (size_t t = 0; t < fmaps.taps.size(); ++t) {
      const FracCoord f =
          feature_coords(p.coord, fmaps.metas[t], image_h, image_w, prov->map_h[t], prov->map_w[t]);
      prov->corners.push_back(make_corner(p.image, f, prov->map_h[t], prov->map_w[t]));
    }
  }

  Tensor out({prov->rows, dim}, g.mode());
  dispatch_mode(g.mode(), [&](auto tag) {
    using T = decltype(tag);
    gather_rows<T>(g, fmaps, *prov, out.data<T>());
  });

  std::vector<Var> inputs = fmaps.taps;
  std::vector<int> tap_ids;
  for (Var v : fmaps.taps) tap_ids.push_back(v.id);
  const int self = static_cast<int>(g.size());
  Var features = g.record(std::move(out), "sample_hypercolumn", inputs, [=](Graph& gg) {
    dispatch_mode(gg.mode(), [&](auto tag) {
      using T = decltype(tag);
      const T* go = gg.value(self).grad<T>();
      for (size_t t = 0; t < tap_ids.size(); ++t) {
        if (!gg.wants_grad(tap_ids[t])) continue;
        scatter_rows<T>(go, *prov, t, prov->metas[t].channels, prov->map_h[t] * prov->map_w[t],
                        gg.grad_buf<T>(tap_ids[t]));
      }
    });
  });
  return HypercolumnMatrix{features, prov};
}

HypercolumnMatrix dense_hypercolumn(const FeatureMapSet& fmaps, i64 image_index,
                                    i64 image_h, i64 image_w, i64 budget_scalars) {
  PXL_CHECK(!fmaps.taps.empty(), ContractError, "dense_hypercolumn needs at least one tap");
  i64 dim = 0;
  for (const auto& m : fmaps.metas) dim += m.channels;
  const i64 required = image_h * image_w * dim;
  if (required > budget_scalars)
    throw ResourceError(cat("dense hypercolumn needs ", required, " scalars, budget is ",
                            budget_scalars),
                        required);
  std::vector<PixelRef> pixels;
  pixels.reserve(static_cast<size_t>(image_h * image_w));
  for (i64 r = 0; r < image_h; ++r)
    for (i64 c = 0; c < image_w; ++c) pixels.push_back({image_index, {r, c}});
  return sample_hypercolumn(fmaps, pixels, image_h, image_w);
}

std::vector<Tensor> scatter_gradient(const Tensor& grad, const Provenance& prov,
                                     i64 batch_images) {
  PXL_CHECK(grad.ndim() == 2 && grad.dim(0) == prov.rows && grad.dim(1) == prov.dim,
            ContractError, "gradient shape ", shape_str(grad.shape()),
            " does not match provenance [", prov.rows, "x", prov.dim, "]");
  std::vector<Tensor> out;
  for (size_t t = 0; t < prov.metas.size(); ++t) {
    Tensor gmap({batch_images, prov.metas[t].channels, prov.map_h[t], prov.map_w[t]},
                grad.mode());
    dispatch_mode(grad.mode(), [&](auto tag) {
      using T = decltype(tag);
      scatter_rows<T>(grad.data<T>(), prov, t, prov.metas[t].channels,
                      prov.map_h[t] * prov.map_w[t], gmap.data<T>());
    });
    out.push_back(std::move(gmap));
  }
  return out;
}

}  // namespace pxl
