#include "pxl/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <algorithm>
#include <memory>

static_assert(std::endian::native == std::endian::little,
              "PXT1 serialization assumes a little-endian host");

namespace pxl {

Tensor::Tensor(Shape shape, ScalarMode mode) : shape_(std::move(shape)), mode_(mode) {
  for (i64 d : shape_)
    PXL_CHECK(d >= 1, ShapeError, "tensor extent must be >= 1, got ", d,
              " in ", shape_str(shape_));
  numel_ = pxl::numel(shape_);
  if (mode_ == ScalarMode::f32)
    f32_.assign(static_cast<size_t>(numel_), 0.0f);
  else
    f64_.assign(static_cast<size_t>(numel_), 0.0);
}

Tensor Tensor::zeros(Shape shape, ScalarMode mode) { return Tensor(std::move(shape), mode); }

Tensor Tensor::full(Shape shape, double value, ScalarMode mode) {
  Tensor t(std::move(shape), mode);
  for (i64 i = 0; i < t.numel_; ++i) t.set(i, value);
  return t;
}

Tensor Tensor::gaussian(Shape shape, double mean, double sigma, Rng& rng, ScalarMode mode) {
  PXL_CHECK(sigma >= 0.0, ContractError, "gaussian fill needs sigma >= 0, got ", sigma);
  Tensor t(std::move(shape), mode);
  for (i64 i = 0; i < t.numel_; ++i) t.set(i, rng.gaussian(mean, sigma));
  return t;
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, ScalarMode mode) {
  Tensor t(std::move(shape), mode);
  PXL_CHECK(static_cast<i64>(values.size()) == t.numel_, ShapeError,
            "value count ", values.size(), " does not fill ", shape_str(t.shape_));
  for (i64 i = 0; i < t.numel_; ++i) t.set(i, values[static_cast<size_t>(i)]);
  return t;
}

double Tensor::at(i64 i) const {
  return mode_ == ScalarMode::f32 ? static_cast<double>(f32_[static_cast<size_t>(i)])
                                  : f64_[static_cast<size_t>(i)];
}

void Tensor::set(i64 i, double v) {
  if (mode_ == ScalarMode::f32)
    f32_[static_cast<size_t>(i)] = static_cast<float>(v);
  else
    f64_[static_cast<size_t>(i)] = v;
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel_));
  for (i64 i = 0; i < numel_; ++i) out[static_cast<size_t>(i)] = at(i);
  return out;
}

void Tensor::ensure_grad() {
  if (has_grad_) return;
  if (mode_ == ScalarMode::f32)
    gf32_.assign(static_cast<size_t>(numel_), 0.0f);
  else
    gf64_.assign(static_cast<size_t>(numel_), 0.0);
  has_grad_ = true;
}

void Tensor::zero_grad() {
  if (!has_grad_) return;
  std::fill(gf32_.begin(), gf32_.end(), 0.0f);
  std::fill(gf64_.begin(), gf64_.end(), 0.0);
}

void Tensor::drop_grad() {
  gf32_.clear();
  gf32_.shrink_to_fit();
  gf64_.clear();
  gf64_.shrink_to_fit();
  has_grad_ = false;
}

double Tensor::grad_at(i64 i) const {
  PXL_CHECK(has_grad_, ContractError, "grad_at on tensor without gradient");
  return mode_ == ScalarMode::f32 ? static_cast<double>(gf32_[static_cast<size_t>(i)])
                                  : gf64_[static_cast<size_t>(i)];
}

Tensor Tensor::clone() const { return *this; }

Tensor Tensor::to_mode(ScalarMode m) const {
  if (m == mode_) return *this;
  Tensor t(shape_, m);
  for (i64 i = 0; i < numel_; ++i) t.set(i, at(i));
  t.requires_grad_ = requires_grad_;
  return t;
}

Tensor Tensor::reshaped(Shape s) const {
  PXL_CHECK(pxl::numel(s) == numel_, ShapeError, "reshape ", shape_str(shape_), " -> ",
            shape_str(s), " changes element count");
  Tensor t = *this;
  t.shape_ = std::move(s);
  return t;
}

bool Tensor::all_finite() const {
  if (mode_ == ScalarMode::f32) {
    for (float v : f32_)
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : f64_)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || mode_ != other.mode_) return false;
  if (mode_ == ScalarMode::f32)
    return std::memcmp(f32_.data(), other.f32_.data(), f32_.size() * sizeof(float)) == 0;
  return std::memcmp(f64_.data(), other.f64_.data(), f64_.size() * sizeof(double)) == 0;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_pxt(const Tensor& t, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  PXL_CHECK(f != nullptr, Error, "cannot open '", path, "' for writing");
  const unsigned char magic[4] = {'P', 'X', 'T', '1'};
  PXL_CHECK(std::fwrite(magic, 1, 4, f.get()) == 4, Error, "short write: ", path);
  const unsigned char dtype = static_cast<unsigned char>(t.mode());
  const unsigned char ndim = static_cast<unsigned char>(t.ndim());
  PXL_CHECK(t.ndim() <= 255, ShapeError, "PXT1 supports at most 255 dims");
  std::fwrite(&dtype, 1, 1, f.get());
  std::fwrite(&ndim, 1, 1, f.get());
  for (size_t i = 0; i < t.ndim(); ++i) {
    PXL_CHECK(t.dim(i) <= 0xFFFFFFFFLL, ShapeError, "extent exceeds u32: ", t.dim(i));
    const std::uint32_t d = static_cast<std::uint32_t>(t.dim(i));
    std::fwrite(&d, 4, 1, f.get());
  }
  size_t wrote;
  if (t.mode() == ScalarMode::f32)
    wrote = std::fwrite(t.data<float>(), sizeof(float), static_cast<size_t>(t.numel()), f.get());
  else
    wrote = std::fwrite(t.data<double>(), sizeof(double), static_cast<size_t>(t.numel()), f.get());
  PXL_CHECK(wrote == static_cast<size_t>(t.numel()), Error, "short write: ", path);
}

Tensor load_pxt(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  PXL_CHECK(f != nullptr, CorruptionError, "cannot open tensor file '", path, "'");
  unsigned char magic[4];
  PXL_CHECK(std::fread(magic, 1, 4, f.get()) == 4 && magic[0] == 'P' && magic[1] == 'X' &&
                magic[2] == 'T' && magic[3] == '1',
            CorruptionError, "'", path, "' is not a PXT1 file");
  unsigned char dtype = 0, ndim = 0;
  PXL_CHECK(std::fread(&dtype, 1, 1, f.get()) == 1 && std::fread(&ndim, 1, 1, f.get()) == 1,
            CorruptionError, "truncated PXT1 header: ", path);
  PXL_CHECK(dtype <= 1, CorruptionError, "unknown PXT1 dtype code ", int(dtype), ": ", path);
  Shape shape(ndim);
  for (auto& d : shape) {
    std::uint32_t v = 0;
    PXL_CHECK(std::fread(&v, 4, 1, f.get()) == 1, CorruptionError, "truncated PXT1 header: ", path);
    d = static_cast<i64>(v);
  }
  Tensor t(shape, static_cast<ScalarMode>(dtype));
  size_t got;
  if (t.mode() == ScalarMode::f32)
    got = std::fread(t.data<float>(), sizeof(float), static_cast<size_t>(t.numel()), f.get());
  else
    got = std::fread(t.data<double>(), sizeof(double), static_cast<size_t>(t.numel()), f.get());
  PXL_CHECK(got == static_cast<size_t>(t.numel()), CorruptionError, "truncated PXT1 payload: ", path);
  return t;
}

Tensor load_pxt_as(const std::string& path, ScalarMode mode) {
  return load_pxt(path).to_mode(mode);
}

}  // namespace pxl
