#include "pxl/optim.hpp"

#include "pxl/kernels.hpp"

namespace pxl {

Tensor& OptimState::velocity_for(const std::string& name) {
  for (auto& [n, t] : velocity)
    if (n == name) return t;
  throw ContractError(cat("no velocity buffer for parameter '", name, "'"));
}

OptimState make_optim_state(const ParamSet& params) {
  OptimState state;
  for (const auto& e : params.entries())
    if (e.trainable)
      state.velocity.emplace_back(e.name, Tensor::zeros(e.tensor.shape(), e.tensor.mode()));
  return state;
}

void sgd_step(ParamSet& params, const ParamBinding& binding, Graph& g, OptimState& state,
              double lr, double momentum, double weight_decay, bool check_finite) {
  PXL_CHECK(g.backward_ran(), ContractError, "sgd_step before backward");
  for (const auto& [name, var] : binding.vars) {
    ParamEntry* entry = nullptr;
    for (auto& e : params.entries())
      if (e.name == name) {
        entry = &e;
        break;
      }
    PXL_CHECK(entry != nullptr && entry->trainable, ContractError,
              "bound parameter '", name, "' is not a trainable entry");
    Tensor& p = entry->tensor;
    Tensor& v = state.velocity_for(name);
    const Tensor& node = g.value(var.id);
    PXL_CHECK(node.shape() == p.shape(), ShapeError, "gradient shape drifted for '", name, "'");
    const double wd = entry->decay ? weight_decay : 0.0;
    dispatch_mode(p.mode(), [&](auto tag) {
      using T = decltype(tag);
      static const std::vector<T> kEmpty;
      const T* grad;
      std::vector<T> zeros;
      if (node.has_grad()) {
        grad = node.grad<T>();
      } else {
        zeros.assign(static_cast<size_t>(p.numel()), T(0));
        grad = zeros.data();
      }
      if (check_finite && node.has_grad())
        for (i64 i = 0; i < p.numel(); ++i)
          PXL_CHECK(std::isfinite(static_cast<double>(grad[i])), NumericError,
                    "non-finite gradient in parameter '", name, "' at flat index ", i);
      kernels::sgd_update(p.data<T>(), v.data<T>(), grad, static_cast<T>(lr),
                          static_cast<T>(momentum), static_cast<T>(wd), p.numel());
    });
  }
}

double lr_at(double lr0, const std::vector<std::pair<i64, double>>& schedule, i64 iteration) {
  PXL_CHECK(iteration >= 0, ContractError, "negative iteration");
  double lr = lr0;
  i64 prev = -1;
  for (const auto& [it, mult] : schedule) {
    PXL_CHECK(it > prev, ConfigError, "schedule milestones must be strictly increasing");
    PXL_CHECK(mult > 0, ConfigError, "schedule multipliers must be positive");
    prev = it;
    if (it <= iteration) lr *= mult;
  }
  return lr;
}

std::vector<std::pair<i64, double>> default_schedule(i64 iterations) {
  if (iterations < 3) return {};
  return {{iterations / 3, 0.1}, {2 * iterations / 3, 0.1}};
}

}  // namespace pxl
