#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pxl/graph.hpp"

namespace pxl {

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  i64 worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Graph-building callable. Must rebuild an identical graph over the current
// parameter values on every call (any internal randomness fixed per call) and
// return the scalar loss. When want_grads is set, it also runs backward and
// fills grads with one flat vector per parameter, in parameter order; a
// parameter the loss does not depend on gets zeros.
using GradCheckFn =
    std::function<double(bool want_grads, std::vector<std::vector<double>>* grads)>;

// Central-difference check of every parameter scalar against the recorded
// backward. Relative error uses max(|analytic|, |numeric|, 1e-12) as the
// denominator. Parameters must be 64-bit tensors.
GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<NamedParam>& params,
                           double eps);

// Convenience for GradCheckFn implementations: a parameter's gradient after
// backward, or zeros if the loss never touched it.
std::vector<double> grad_or_zeros(const Graph& g, Var v);

}  // namespace pxl
