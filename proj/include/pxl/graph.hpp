#pragma once

#include <functional>
#include <vector>

#include "pxl/tensor.hpp"

namespace pxl {

class Graph;

// Handle to a node on the tape.
struct Var {
  Graph* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
  const Shape& shape() const;
  const Tensor& val() const;
  i64 numel() const { return val().numel(); }
};

// Dynamically recorded computation tape. Nodes are appended as ops execute,
// so insertion order is a topological order; backward walks it once in
// reverse. One graph is built and traversed by exactly one thread.
class Graph {
 public:
  explicit Graph(ScalarMode mode, bool strict = false)
      : mode_(mode), strict_(strict) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  ScalarMode mode() const { return mode_; }
  // Strict graphs assert every op output finite and reject domain abuse
  // (e.g. log of a non-positive value).
  bool strict() const { return strict_; }

  // Leaf carrying data that never needs a gradient.
  Var input(Tensor t);
  // Leaf copied from a persistent parameter tensor; receives a gradient.
  Var param(const Tensor& t);

  // Appends an op node. requires_grad is inherited from the inputs; backward
  // closures of dead branches are dropped.
  Var record(Tensor out, const char* opname, const std::vector<Var>& inputs,
             std::function<void(Graph&)> backward);

  // Reverse sweep from a scalar loss. Each contributing node is visited
  // exactly once, in reverse insertion order.
  void backward(Var loss);

  Tensor& value(int id) { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool wants_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].value.has_grad(); }
  const char* opname(int id) const { return nodes_[static_cast<size_t>(id)].opname; }

  // Gradient buffer of a node, allocated (zeroed) on first use. Only
  // meaningful for nodes with requires_grad.
  template <class T>
  T* grad_buf(int id) {
    Tensor& t = nodes_[static_cast<size_t>(id)].value;
    t.ensure_grad();
    return t.grad<T>();
  }

  size_t size() const { return nodes_.size(); }
  u64 backward_visits() const { return backward_visits_; }
  bool backward_ran() const { return backward_ran_; }

  // Scalars currently held by values and gradients on the tape.
  i64 live_scalars() const;

  // Drops nodes with id >= count. Only valid when no live Var references
  // them; lets strip-wise evaluation bound its peak footprint.
  void truncate(size_t count) {
    PXL_CHECK(count <= nodes_.size(), ContractError, "truncate beyond tape end");
    nodes_.resize(count);
  }

  void check_output(const Tensor& t, const char* opname) const;

 private:
  struct Node {
    Tensor value;
    const char* opname;
    std::function<void(Graph&)> back;
    bool requires_grad = false;
  };

  ScalarMode mode_;
  bool strict_;
  std::vector<Node> nodes_;
  u64 backward_visits_ = 0;
  bool backward_ran_ = false;
};

inline const Shape& Var::shape() const { return g->value(id).shape(); }
inline const Tensor& Var::val() const { return g->value(id); }

}  // namespace pxl
