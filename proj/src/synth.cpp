#include "pxl/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace pxl {

const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::segmentation: return "segmentation";
    case TaskKind::normals: return "normals";
    case TaskKind::edges: return "edges";
  }
  return "?";
}

TaskKind task_from_name(const std::string& name) {
  if (name == "segmentation") return TaskKind::segmentation;
  if (name == "normals") return TaskKind::normals;
  if (name == "edges") return TaskKind::edges;
  throw ConfigError(cat("unknown task '", name, "'"));
}

namespace {

void check_size(i64 size) {
  PXL_CHECK(size >= 16 && (size & (size - 1)) == 0, ContractError,
            "dataset size must be a power of 2 >= 16, got ", size);
}

struct ShapeInst {
  bool disc = false;
  double cx = 0, cy = 0;   // center (pixels)
  double hw = 0, hh = 0;   // half extents; radius = hw for discs
  double color[3] = {0, 0, 0};
};

// Signed distance; negative inside.
double shape_sdf(const ShapeInst& s, double x, double y) {
  if (s.disc) {
    const double dx = x - s.cx, dy = y - s.cy;
    return std::sqrt(dx * dx + dy * dy) - s.hw;
  }
  const double dx = std::fabs(x - s.cx) - s.hw;
  const double dy = std::fabs(y - s.cy) - s.hh;
  return std::max(dx, dy);
}

const double kClassColors[][3] = {
    {0.80, 0.25, 0.25}, {0.25, 0.80, 0.25}, {0.25, 0.25, 0.80},
    {0.80, 0.80, 0.25}, {0.25, 0.80, 0.80}, {0.80, 0.25, 0.80},
    {0.85, 0.55, 0.25}, {0.55, 0.25, 0.85},
};
constexpr size_t kNumClassColors = sizeof(kClassColors) / sizeof(kClassColors[0]);

ShapeInst sample_shape(Rng& rng, i64 size, i64 cls, double min_half, double max_half) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    ShapeInst s;
    s.disc = rng.below(2) == 1;
    s.hw = rng.uniform(min_half, max_half);
    s.hh = s.disc ? s.hw : rng.uniform(min_half, max_half);
    const double need = std::max(s.hw, s.hh) + 1.0;
    if (2.0 * need >= static_cast<double>(size)) continue;  // cannot fit; retry smaller
    s.cx = rng.uniform(need, static_cast<double>(size) - need);
    s.cy = rng.uniform(need, static_cast<double>(size) - need);
    const auto& base = kClassColors[static_cast<size_t>(cls - 1) % kNumClassColors];
    for (int ch = 0; ch < 3; ++ch) s.color[ch] = base[ch] + rng.uniform(-0.05, 0.05);
    return s;
  }
  throw Error(cat("could not fit a shape into a ", size, "x", size, " image after 100 attempts"));
}

// Shared shape-scene renderer: composes the image and the hard label map.
void render_shapes(Rng& rng, i64 size, i64 n_shapes, double min_half, double max_half,
                   double noise_sigma, Tensor* image, Tensor* labels) {
  const i64 hw = size * size;
  // textured background: flat base plus two low-frequency gratings
  const double base = 0.15;
  const double a1 = rng.uniform(0.03, 0.07), a2 = rng.uniform(0.03, 0.07);
  const double f1 = 1.0 + static_cast<double>(rng.below(3));
  const double f2 = 1.0 + static_cast<double>(rng.below(3));
  const double p1 = rng.uniform(0.0, 6.283185307179586);
  const double p2 = rng.uniform(0.0, 6.283185307179586);
  const double tau = 6.283185307179586 / static_cast<double>(size);
  for (i64 r = 0; r < size; ++r) {
    for (i64 c = 0; c < size; ++c) {
      const double tex = base + a1 * std::sin(tau * f1 * static_cast<double>(c) + p1) +
                         a2 * std::sin(tau * f2 * static_cast<double>(r) + p2);
      for (int ch = 0; ch < 3; ++ch) image->set(ch * hw + r * size + c, tex);
      labels->set(r * size + c, 0.0);
    }
  }
  for (i64 k = 1; k <= n_shapes; ++k) {
    const ShapeInst s = sample_shape(rng, size, k, min_half, max_half);
    for (i64 r = 0; r < size; ++r) {
      for (i64 c = 0; c < size; ++c) {
        const double sdf = shape_sdf(s, static_cast<double>(c), static_cast<double>(r));
        const double alpha = std::min(1.0, std::max(0.0, 0.5 - sdf));  // 1-px soft edge
        if (alpha <= 0.0) continue;
        const i64 pi = r * size + c;
        for (int ch = 0; ch < 3; ++ch) {
          const i64 ii = ch * hw + pi;
          image->set(ii, alpha * s.color[ch] + (1.0 - alpha) * image->at(ii));
        }
        if (sdf < 0.0) labels->set(pi, static_cast<double>(k));
      }
    }
  }
  if (noise_sigma > 0.0)
    for (i64 i = 0; i < image->numel(); ++i)
      image->set(i, image->at(i) + rng.gaussian(0.0, noise_sigma));
}

}  // namespace

SyntheticDataset gen_segmentation(u64 seed, i64 n_images, i64 size, i64 classes) {
  check_size(size);
  PXL_CHECK(classes >= 2, ContractError, "segmentation needs at least 2 classes, got ", classes);
  PXL_CHECK(n_images >= 0, ContractError, "n_images must be >= 0");
  SyntheticDataset ds;
  ds.kind = TaskKind::segmentation;
  ds.size = size;
  ds.classes = classes;
  ds.seed = seed;
  ds.generator = "seg-shapes-v1";
  Rng root = Rng::stream(seed, "gen-segmentation");
  for (i64 img = 0; img < n_images; ++img) {
    Rng rng = root.fork(static_cast<u64>(img));
    Tensor image({3, size, size}, ScalarMode::f64);
    Tensor labels({size, size}, ScalarMode::f64);
    const double unit = static_cast<double>(size) / 32.0;  // geometry scales with the canvas
    render_shapes(rng, size, classes - 1, 4.0 * unit, 8.0 * unit, 0.05, &image, &labels);
    // 1-pixel ignore band across label transitions
    Tensor marked = labels.clone();
    for (i64 r = 0; r < size; ++r) {
      for (i64 c = 0; c < size; ++c) {
        const double v = labels.at(r * size + c);
        const bool edge = (r > 0 && labels.at((r - 1) * size + c) != v) ||
                          (r + 1 < size && labels.at((r + 1) * size + c) != v) ||
                          (c > 0 && labels.at(r * size + c - 1) != v) ||
                          (c + 1 < size && labels.at(r * size + c + 1) != v);
        if (edge) marked.set(r * size + c, static_cast<double>(kIgnoreLabel));
      }
    }
    ds.images.push_back(std::move(image));
    ds.targets.push_back(std::move(marked));
  }
  return ds;
}

double HeightField::value(double x, double y) const {
  double z = plane_a * x + plane_b * y;
  for (const Bump& b : bumps) {
    const double dx = x - b.cx, dy = y - b.cy;
    z += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
  }
  return z;
}

void HeightField::gradient(double x, double y, double* gx, double* gy) const {
  *gx = plane_a;
  *gy = plane_b;
  for (const Bump& b : bumps) {
    const double dx = x - b.cx, dy = y - b.cy;
    const double e = b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
    *gx += e * -dx / (b.sigma * b.sigma);
    *gy += e * -dy / (b.sigma * b.sigma);
  }
}

HeightField sample_height_field(Rng& rng, i64 size) {
  HeightField f;
  f.plane_a = rng.uniform(-0.35, 0.35);
  f.plane_b = rng.uniform(-0.35, 0.35);
  const i64 n_bumps = 3 + static_cast<i64>(rng.below(5));  // plane + <=7 bumps
  const double s = static_cast<double>(size);
  for (i64 i = 0; i < n_bumps; ++i) {
    HeightField::Bump b;
    const double sign = rng.below(2) == 1 ? 1.0 : -1.0;
    b.amp = sign * rng.uniform(1.5, 4.0);
    b.cx = rng.uniform(0.0, s - 1.0);
    b.cy = rng.uniform(0.0, s - 1.0);
    b.sigma = rng.uniform(3.0, 8.0) * s / 32.0;
    f.bumps.push_back(b);
  }
  return f;
}

void normal_from_gradient(double gx, double gy, double n[3]) {
  const double inv = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
  n[0] = -gx * inv;
  n[1] = -gy * inv;
  n[2] = inv;
}

namespace {

// Fixed directional lights tilted 120 degrees apart around +z; shading keeps
// n recoverable for the slope range the field generator produces.
const double kLights[3][3] = {
    {0.450, 0.000, 0.893}, {-0.225, 0.390, 0.893}, {-0.225, -0.390, 0.893}};

}  // namespace

SyntheticDataset gen_normals(u64 seed, i64 n_images, i64 size) {
  check_size(size);
  PXL_CHECK(n_images >= 0, ContractError, "n_images must be >= 0");
  SyntheticDataset ds;
  ds.kind = TaskKind::normals;
  ds.size = size;
  ds.classes = 0;
  ds.seed = seed;
  ds.generator = "normals-heightfield-v1";
  Rng root = Rng::stream(seed, "gen-normals");
  const i64 hw = size * size;
  for (i64 img = 0; img < n_images; ++img) {
    Rng rng = root.fork(static_cast<u64>(img));
    const HeightField field = sample_height_field(rng, size);
    Tensor image({3, size, size}, ScalarMode::f64);
    Tensor target({3, size, size}, ScalarMode::f64);
    for (i64 r = 0; r < size; ++r) {
      for (i64 c = 0; c < size; ++c) {
        double gx, gy, n[3];
        field.gradient(static_cast<double>(c), static_cast<double>(r), &gx, &gy);
        normal_from_gradient(gx, gy, n);
        const i64 pi = r * size + c;
        for (int ch = 0; ch < 3; ++ch) target.set(ch * hw + pi, n[ch]);
        for (int ch = 0; ch < 3; ++ch) {
          const double dot =
              n[0] * kLights[ch][0] + n[1] * kLights[ch][1] + n[2] * kLights[ch][2];
          image.set(ch * hw + pi, 0.1 + 0.85 * std::max(0.0, dot));
        }
      }
    }
    for (i64 i = 0; i < image.numel(); ++i)
      image.set(i, image.at(i) + rng.gaussian(0.0, 0.01));
    ds.images.push_back(std::move(image));
    ds.targets.push_back(std::move(target));
  }
  return ds;
}

Tensor edges_from_labels(const Tensor& labels) {
  PXL_CHECK(labels.ndim() == 2, ShapeError, "edges_from_labels expects [H x W]");
  const i64 h = labels.dim(0), w = labels.dim(1);
  Tensor edges({h, w}, ScalarMode::f64);
  for (i64 r = 0; r < h; ++r) {
    for (i64 c = 0; c < w; ++c) {
      const double v = labels.at(r * w + c);
      const bool edge = (r > 0 && labels.at((r - 1) * w + c) < v) ||
                        (r + 1 < h && labels.at((r + 1) * w + c) < v) ||
                        (c > 0 && labels.at(r * w + c - 1) < v) ||
                        (c + 1 < w && labels.at(r * w + c + 1) < v);
      edges.set(r * w + c, edge ? 1.0 : 0.0);
    }
  }
  return edges;
}

SyntheticDataset gen_edges(u64 seed, i64 n_images, i64 size) {
  check_size(size);
  PXL_CHECK(n_images >= 0, ContractError, "n_images must be >= 0");
  SyntheticDataset ds;
  ds.kind = TaskKind::edges;
  ds.size = size;
  ds.classes = 0;
  ds.seed = seed;
  ds.generator = "edges-shapes-v1";
  Rng root = Rng::stream(seed, "gen-edges");
  i64 positives = 0, total = 0;
  for (i64 img = 0; img < n_images; ++img) {
    Rng rng = root.fork(static_cast<u64>(img));
    Tensor image({3, size, size}, ScalarMode::f64);
    Tensor labels({size, size}, ScalarMode::f64);
    const i64 n_shapes = 2;  // keeps the positive rate near 5%
    const double unit = static_cast<double>(size) / 32.0;
    render_shapes(rng, size, n_shapes, 2.5 * unit, 4.5 * unit, 0.05, &image, &labels);
    Tensor edges = edges_from_labels(labels);
    for (i64 i = 0; i < edges.numel(); ++i) positives += edges.at(i) > 0.5 ? 1 : 0;
    total += edges.numel();
    ds.images.push_back(std::move(image));
    ds.targets.push_back(std::move(edges));
    ds.aux.push_back(std::move(labels));
  }
  ds.pos_rate = total > 0 ? static_cast<double>(positives) / static_cast<double>(total) : 0.0;
  return ds;
}

SyntheticDataset generate_dataset(TaskKind kind, u64 seed, i64 n_images, i64 size, i64 classes) {
  switch (kind) {
    case TaskKind::segmentation: return gen_segmentation(seed, n_images, size, classes);
    case TaskKind::normals: return gen_normals(seed, n_images, size);
    case TaskKind::edges: return gen_edges(seed, n_images, size);
  }
  throw ConfigError("unknown task kind");
}

namespace fs = std::filesystem;

void save_dataset(const SyntheticDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "targets");
  if (!ds.aux.empty()) fs::create_directories(fs::path(dir) / "aux");
  std::ofstream m(fs::path(dir) / "manifest.txt");
  PXL_CHECK(m.good(), Error, "cannot write manifest in ", dir);
  m << "pxds1\n";
  m << "task=" << task_name(ds.kind) << "\n";
  m << "images=" << ds.count() << "\n";
  m << "size=" << ds.size << "\n";
  m << "classes=" << ds.classes << "\n";
  m << "seed=" << ds.seed << "\n";
  m << "generator=" << ds.generator << "\n";
  m << "pos_rate=" << ds.pos_rate << "\n";
  m << "aux=" << (ds.aux.empty() ? 0 : 1) << "\n";
  char name[64];
  for (i64 i = 0; i < ds.count(); ++i) {
    std::snprintf(name, sizeof name, "images/im_%05lld.pxt", static_cast<long long>(i));
    save_pxt(ds.images[static_cast<size_t>(i)], (fs::path(dir) / name).string());
    std::snprintf(name, sizeof name, "targets/t_%05lld.pxt", static_cast<long long>(i));
    save_pxt(ds.targets[static_cast<size_t>(i)], (fs::path(dir) / name).string());
    if (!ds.aux.empty()) {
      std::snprintf(name, sizeof name, "aux/a_%05lld.pxt", static_cast<long long>(i));
      save_pxt(ds.aux[static_cast<size_t>(i)], (fs::path(dir) / name).string());
    }
  }
}

SyntheticDataset load_dataset(const std::string& dir) {
  std::ifstream m(fs::path(dir) / "manifest.txt");
  PXL_CHECK(m.good(), CorruptionError, "no dataset manifest in '", dir,
            "' (generate one with the gen-data command)");
  std::string line;
  std::getline(m, line);
  PXL_CHECK(line == "pxds1", CorruptionError, "bad dataset manifest magic in ", dir);
  SyntheticDataset ds;
  i64 n = 0;
  bool has_aux = false;
  while (std::getline(m, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "task") ds.kind = task_from_name(val);
    else if (key == "images") n = std::stoll(val);
    else if (key == "size") ds.size = std::stoll(val);
    else if (key == "classes") ds.classes = std::stoll(val);
    else if (key == "seed") ds.seed = std::stoull(val);
    else if (key == "generator") ds.generator = val;
    else if (key == "pos_rate") ds.pos_rate = std::stod(val);
    else if (key == "aux") has_aux = val == "1";
  }
  char name[64];
  for (i64 i = 0; i < n; ++i) {
    std::snprintf(name, sizeof name, "images/im_%05lld.pxt", static_cast<long long>(i));
    ds.images.push_back(load_pxt((fs::path(dir) / name).string()));
    std::snprintf(name, sizeof name, "targets/t_%05lld.pxt", static_cast<long long>(i));
    ds.targets.push_back(load_pxt((fs::path(dir) / name).string()));
    if (has_aux) {
      std::snprintf(name, sizeof name, "aux/a_%05lld.pxt", static_cast<long long>(i));
      ds.aux.push_back(load_pxt((fs::path(dir) / name).string()));
    }
  }
  return ds;
}

}  // namespace pxl
