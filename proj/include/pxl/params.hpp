#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pxl/graph.hpp"

namespace pxl {

// One named model tensor. Running statistics live here too (trainable =
// false) so checkpointing and mode conversion see a single flat store.
// decay marks tensors subject to weight decay: conv/fc weights only, not
// biases or batch-norm scale/shift.
struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;
  bool decay = false;
};

class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t, bool trainable = true, bool decay = false) {
    PXL_CHECK(!contains(name), ContractError, "duplicate parameter '", name, "'");
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry{name, std::move(t), trainable, decay});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    PXL_CHECK(it != index_.end(), ContractError, "unknown parameter '", name, "'");
    return entries_[it->second].tensor;
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    PXL_CHECK(it != index_.end(), ContractError, "unknown parameter '", name, "'");
    return entries_[it->second].tensor;
  }

  const ParamEntry& entry(const std::string& name) const {
    auto it = index_.find(name);
    PXL_CHECK(it != index_.end(), ContractError, "unknown parameter '", name, "'");
    return entries_[it->second];
  }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  i64 total_scalars() const {
    i64 n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  ParamSet to_mode(ScalarMode m) const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.to_mode(m), e.trainable, e.decay);
    return out;
  }

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Graph handles for the parameters referenced by one forward build, in
// registration order; the optimizer walks this to pull gradients.
struct ParamBinding {
  std::vector<std::pair<std::string, Var>> vars;
  void bind(const std::string& name, Var v) { vars.emplace_back(name, v); }
};

}  // namespace pxl
