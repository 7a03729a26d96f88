#include "pxl/sampling.hpp"

#include <cmath>

namespace pxl {

const char* strategy_name(SampleStrategy s) {
  return s == SampleStrategy::uniform ? "uniform" : "biased";
}

SampleStrategy strategy_from_name(const std::string& name) {
  if (name == "uniform") return SampleStrategy::uniform;
  if (name == "biased") return SampleStrategy::biased;
  throw ConfigError(cat("unknown sampling strategy '", name, "'"));
}

namespace {

// Partial Fisher-Yates over a pool of flat indices: first n entries are a
// uniform without-replacement draw.
std::vector<i64> draw_without_replacement(std::vector<i64>& pool, i64 n, Rng& rng) {
  std::vector<i64> out;
  out.reserve(static_cast<size_t>(n));
  const i64 m = static_cast<i64>(pool.size());
  for (i64 i = 0; i < n; ++i) {
    const i64 j = i + static_cast<i64>(rng.below(static_cast<u64>(m - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    out.push_back(pool[static_cast<size_t>(i)]);
  }
  return out;
}

i64 ceil_quota(double rho, i64 n) {
  // ceil(rho*n) with a nudge so exact rationals like 0.1*10 do not round up
  return static_cast<i64>(std::ceil(rho * static_cast<double>(n) - 1e-9));
}

}  // namespace

std::vector<PixelCoord> sample_pixels_uniform(i64 h, i64 w, i64 n, Rng& rng) {
  PXL_CHECK(n >= 0 && n <= h * w, ContractError, "cannot sample ", n,
            " distinct pixels from a ", h, "x", w, " image");
  std::vector<i64> pool(static_cast<size_t>(h * w));
  for (i64 i = 0; i < h * w; ++i) pool[static_cast<size_t>(i)] = i;
  std::vector<PixelCoord> out;
  out.reserve(static_cast<size_t>(n));
  for (i64 flat : draw_without_replacement(pool, n, rng))
    out.push_back({flat / w, flat % w});
  return out;
}

std::vector<PixelCoord> sample_pixels_biased(const Tensor& labels, i64 n, double rho, Rng& rng) {
  PXL_CHECK(labels.ndim() == 2, ShapeError, "biased sampling needs an [H x W] binary map");
  PXL_CHECK(rho >= 0.0 && rho <= 1.0, ContractError, "rho must be in [0,1], got ", rho);
  const i64 h = labels.dim(0), w = labels.dim(1);
  PXL_CHECK(n >= 0 && n <= h * w, ContractError, "cannot sample ", n, " pixels from ", h, "x", w);
  std::vector<i64> pos, neg;
  for (i64 i = 0; i < h * w; ++i) (labels.at(i) > 0.5 ? pos : neg).push_back(i);

  i64 want_pos = std::min<i64>(ceil_quota(rho, n), n);
  i64 want_neg = n - want_pos;
  // shortfall spills to the other pool
  if (want_pos > static_cast<i64>(pos.size())) {
    want_neg += want_pos - static_cast<i64>(pos.size());
    want_pos = static_cast<i64>(pos.size());
  }
  if (want_neg > static_cast<i64>(neg.size())) {
    want_pos += want_neg - static_cast<i64>(neg.size());
    want_neg = static_cast<i64>(neg.size());
    want_pos = std::min<i64>(want_pos, static_cast<i64>(pos.size()));
  }

  std::vector<PixelCoord> out;
  out.reserve(static_cast<size_t>(n));
  for (i64 flat : draw_without_replacement(pos, want_pos, rng)) out.push_back({flat / w, flat % w});
  for (i64 flat : draw_without_replacement(neg, want_neg, rng)) out.push_back({flat / w, flat % w});
  return out;
}

PixelBatch build_batch(const SyntheticDataset& ds, i64 images_per_batch, i64 pixels_per_image,
                       SampleStrategy strategy, double rho, Rng& rng) {
  PXL_CHECK(ds.count() >= images_per_batch && images_per_batch >= 1, ContractError,
            "batch wants ", images_per_batch, " distinct images, dataset has ", ds.count());
  PXL_CHECK(pixels_per_image >= 1 && pixels_per_image <= ds.size * ds.size, ContractError,
            "cannot sample ", pixels_per_image, " distinct pixels from ", ds.size, "x", ds.size,
            " images");
  PXL_CHECK(strategy == SampleStrategy::uniform || ds.kind == TaskKind::edges, ContractError,
            "biased sampling needs the binary edge task");

  PixelBatch batch;
  batch.kind = ds.kind;
  batch.images_per_batch = images_per_batch;
  batch.pixels_per_image = pixels_per_image;

  std::vector<i64> pool(static_cast<size_t>(ds.count()));
  for (i64 i = 0; i < ds.count(); ++i) pool[static_cast<size_t>(i)] = i;
  batch.image_ids = draw_without_replacement(pool, images_per_batch, rng);

  const i64 hw = ds.size;
  for (i64 slot = 0; slot < images_per_batch; ++slot) {
    const i64 img = batch.image_ids[static_cast<size_t>(slot)];
    const Tensor& target = ds.targets[static_cast<size_t>(img)];
    std::vector<PixelCoord> coords =
        strategy == SampleStrategy::uniform
            ? sample_pixels_uniform(hw, hw, pixels_per_image, rng)
            : sample_pixels_biased(target, pixels_per_image, rho, rng);
    for (const PixelCoord& p : coords) {
      batch.pixels.push_back({slot, p});
      switch (ds.kind) {
        case TaskKind::segmentation:
        case TaskKind::edges:
          batch.class_targets.push_back(static_cast<int>(target.at(p.row * hw + p.col)));
          break;
        case TaskKind::normals: {
          std::array<double, 3> v;
          for (int ch = 0; ch < 3; ++ch) v[size_t(ch)] = target.at(ch * hw * hw + p.row * hw + p.col);
          batch.vec_targets.push_back(v);
          break;
        }
      }
    }
  }
  return batch;
}

void dump_batch_csv(const PixelBatch& batch, std::ostream& os) {
  const bool vec = batch.kind == TaskKind::normals;
  os << (vec ? "image_index,row,col,target_x,target_y,target_z\n" : "image_index,row,col,target\n");
  for (size_t i = 0; i < batch.pixels.size(); ++i) {
    const PixelRef& p = batch.pixels[i];
    const i64 ds_index = batch.image_ids[static_cast<size_t>(p.image)];
    os << ds_index << ',' << p.coord.row << ',' << p.coord.col;
    if (vec) {
      const auto& v = batch.vec_targets[i];
      os << ',' << v[0] << ',' << v[1] << ',' << v[2];
    } else {
      os << ',' << batch.class_targets[i];
    }
    os << '\n';
  }
}

}  // namespace pxl
