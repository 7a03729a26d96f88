#include "pxl/gradcheck.hpp"

#include <cmath>

namespace pxl {

GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<NamedParam>& params,
                           double eps) {
  PXL_CHECK(eps > 0.0, ContractError, "grad_check eps must be positive");
  for (const NamedParam& p : params)
    PXL_CHECK(p.tensor->mode() == ScalarMode::f64, ContractError,
              "grad_check runs in verification mode; parameter '", p.name, "' is ",
              mode_name(p.tensor->mode()));

  std::vector<std::vector<double>> analytic;
  fn(true, &analytic);
  PXL_CHECK(analytic.size() == params.size(), ContractError,
            "grad_check fn returned ", analytic.size(), " gradients for ", params.size(),
            " parameters");

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi].tensor;
    PXL_CHECK(static_cast<i64>(analytic[pi].size()) == t.numel(), ContractError,
              "gradient size mismatch for parameter '", params[pi].name, "'");
    double* data = t.data<double>();
    for (i64 i = 0; i < t.numel(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double lp = fn(false, nullptr);
      data[i] = saved - eps;
      const double lm = fn(false, nullptr);
      data[i] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[pi][static_cast<size_t>(i)];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi].name;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

std::vector<double> grad_or_zeros(const Graph& g, Var v) {
  const Tensor& t = g.value(v.id);
  std::vector<double> out(static_cast<size_t>(t.numel()), 0.0);
  if (t.has_grad())
    for (i64 i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = t.grad_at(i);
  return out;
}

}  // namespace pxl
