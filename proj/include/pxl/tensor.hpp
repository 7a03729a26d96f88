#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pxl/common.hpp"
#include "pxl/rng.hpp"

namespace pxl {

// Numeric width of a whole computation. standard runs 32-bit; verification
// runs 64-bit so gradient checks and determinism assertions are not fighting
// float noise. A graph executes entirely in one mode.
enum class ScalarMode : std::uint8_t { f32 = 0, f64 = 1 };

inline const char* mode_name(ScalarMode m) { return m == ScalarMode::f32 ? "f32" : "f64"; }

// Dense row-major n-d array with an optional gradient buffer of the same
// shape. Tensors produced by graph ops are treated as immutable values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, ScalarMode mode);  // zeros

  static Tensor zeros(Shape shape, ScalarMode mode);
  static Tensor full(Shape shape, double value, ScalarMode mode);
  static Tensor gaussian(Shape shape, double mean, double sigma, Rng& rng, ScalarMode mode);
  static Tensor from_values(Shape shape, const std::vector<double>& values, ScalarMode mode);

  const Shape& shape() const { return shape_; }
  i64 dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  i64 numel() const { return numel_; }
  ScalarMode mode() const { return mode_; }
  bool empty() const { return numel_ == 0; }

  template <class T> T* data();
  template <class T> const T* data() const;

  // Mode-generic element access for cold paths (io, metrics, generators).
  double at(i64 i) const;
  void set(i64 i, double v);
  std::vector<double> to_vector() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool rg) { requires_grad_ = rg; }

  bool has_grad() const { return has_grad_; }
  void ensure_grad();  // allocate zeros if absent
  void zero_grad();
  void drop_grad();
  template <class T> T* grad();
  template <class T> const T* grad() const;
  double grad_at(i64 i) const;

  Tensor clone() const;
  Tensor to_mode(ScalarMode m) const;
  Tensor reshaped(Shape s) const;  // same data, new shape (numel must match)

  bool all_finite() const;           // data only
  bool bitwise_equal(const Tensor& other) const;  // shape, mode and payload
  i64 live_scalars() const { return numel_ + (has_grad_ ? numel_ : 0); }

 private:
  Shape shape_;
  i64 numel_ = 0;
  ScalarMode mode_ = ScalarMode::f32;
  std::vector<float> f32_;
  std::vector<double> f64_;
  std::vector<float> gf32_;
  std::vector<double> gf64_;
  bool requires_grad_ = false;
  bool has_grad_ = false;
};

template <> inline float* Tensor::data<float>() { return f32_.data(); }
template <> inline const float* Tensor::data<float>() const { return f32_.data(); }
template <> inline double* Tensor::data<double>() { return f64_.data(); }
template <> inline const double* Tensor::data<double>() const { return f64_.data(); }
template <> inline float* Tensor::grad<float>() { return gf32_.data(); }
template <> inline const float* Tensor::grad<float>() const { return gf32_.data(); }
template <> inline double* Tensor::grad<double>() { return gf64_.data(); }
template <> inline const double* Tensor::grad<double>() const { return gf64_.data(); }

// Calls f with a value of the scalar type selected by mode.
template <class F>
decltype(auto) dispatch_mode(ScalarMode m, F&& f) {
  if (m == ScalarMode::f32) return f(float{});
  return f(double{});
}

// "PXT1" tensor file: magic 'P','X','T','1'; u8 dtype (0 = f32, 1 = f64);
// u8 ndim; ndim x u32 little-endian extents; row-major little-endian payload.
void save_pxt(const Tensor& t, const std::string& path);
Tensor load_pxt(const std::string& path);
Tensor load_pxt_as(const std::string& path, ScalarMode mode);

}  // namespace pxl
