#pragma once

#include <map>
#include <string>

#include "pxl/optim.hpp"

namespace pxl {

// Checkpoint directory: a text manifest (name, file, shape flags per tensor)
// plus one PXT1 file per parameter and optimizer buffer. Restore is bitwise.
void save_checkpoint(const std::string& dir, const ParamSet& params, const OptimState& optim,
                     const std::map<std::string, u64>& rng_states);

struct Checkpoint {
  ParamSet params;
  OptimState optim;
  std::map<std::string, u64> rng_states;
};

Checkpoint load_checkpoint(const std::string& dir);

// Replaces the tensors of an existing ParamSet with checkpointed values;
// names and shapes must match exactly.
void restore_params(ParamSet& params, const ParamSet& loaded);

}  // namespace pxl
