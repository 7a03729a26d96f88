#include "pxl/graph.hpp"

namespace pxl {

Var Graph::input(Tensor t) {
  PXL_CHECK(t.mode() == mode_, ContractError, "tensor mode ", mode_name(t.mode()),
            " fed to a ", mode_name(mode_), " graph");
  check_output(t, "input");
  Node n;
  n.value = std::move(t);
  n.value.set_requires_grad(false);
  n.opname = "input";
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const Tensor& t) {
  PXL_CHECK(t.mode() == mode_, ContractError, "parameter mode ", mode_name(t.mode()),
            " fed to a ", mode_name(mode_), " graph");
  Node n;
  n.value = t;
  n.value.drop_grad();
  n.value.set_requires_grad(true);
  n.opname = "param";
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Tensor out, const char* opname, const std::vector<Var>& inputs,
                  std::function<void(Graph&)> backward) {
  PXL_CHECK(out.mode() == mode_, ContractError, "op '", opname, "' produced ",
            mode_name(out.mode()), " in a ", mode_name(mode_), " graph");
  bool rg = false;
  for (const Var& v : inputs) {
    PXL_CHECK(v.g == this, ContractError, "op '", opname,
              "' mixes values from different graphs");
    PXL_CHECK(v.id < static_cast<int>(nodes_.size()), ContractError,
              "op '", opname, "' references a node from the future");
    rg = rg || nodes_[static_cast<size_t>(v.id)].requires_grad;
  }
  check_output(out, opname);
  Node n;
  n.value = std::move(out);
  n.opname = opname;
  n.requires_grad = rg;
  if (rg) n.back = std::move(backward);
  n.value.set_requires_grad(rg);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var loss) {
  PXL_CHECK(loss.g == this, ContractError, "backward on a value from another graph");
  PXL_CHECK(loss.val().numel() == 1, ContractError,
            "backward needs a scalar loss, got ", shape_str(loss.shape()));
  backward_visits_ = 0;
  Node& last = nodes_[static_cast<size_t>(loss.id)];
  if (!last.requires_grad) { backward_ran_ = true; return; }  // constant loss
  last.value.ensure_grad();
  if (mode_ == ScalarMode::f32)
    last.value.grad<float>()[0] = 1.0f;
  else
    last.value.grad<double>()[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || !n.value.has_grad() || !n.back) continue;
    n.back(*this);
    ++backward_visits_;
  }
  backward_ran_ = true;
}

i64 Graph::live_scalars() const {
  i64 total = 0;
  for (const Node& n : nodes_) total += n.value.live_scalars();
  return total;
}

void Graph::check_output(const Tensor& t, const char* opname) const {
  if (!strict_) return;
  PXL_CHECK(t.all_finite(), NumericError, "op '", opname,
            "' produced a non-finite value");
}

}  // namespace pxl
