#pragma once

#include "pxl/params.hpp"

namespace pxl {

// Velocity buffers mirror the trainable parameters; counters are monotone.
struct OptimState {
  std::vector<std::pair<std::string, Tensor>> velocity;
  i64 iteration = 0;
  i64 epoch = 0;

  Tensor& velocity_for(const std::string& name);
};

OptimState make_optim_state(const ParamSet& params);

// One SGD step over every parameter the forward bound:
//   v <- momentum*v + grad + weight_decay*param ; param <- param - lr*v
// Weight decay applies only to entries flagged decay (conv/fc weights).
// Parameters the loss never touched step with a zero gradient. check_finite
// rejects non-finite gradients, naming the parameter.
void sgd_step(ParamSet& params, const ParamBinding& binding, Graph& g, OptimState& state,
              double lr, double momentum, double weight_decay, bool check_finite);

// lr0 times the product of multipliers whose milestone iteration <= now.
double lr_at(double lr0, const std::vector<std::pair<i64, double>>& schedule, i64 iteration);

// Two 10x reductions spaced evenly across the budget.
std::vector<std::pair<i64, double>> default_schedule(i64 iterations);

}  // namespace pxl
