#include "pxl/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace pxl {

namespace fs = std::filesystem;

void save_checkpoint(const std::string& dir, const ParamSet& params, const OptimState& optim,
                     const std::map<std::string, u64>& rng_states) {
  fs::create_directories(fs::path(dir) / "params");
  fs::create_directories(fs::path(dir) / "optim");
  std::ofstream m(fs::path(dir) / "manifest.txt");
  PXL_CHECK(m.good(), Error, "cannot write checkpoint manifest in ", dir);
  m << "pxck1\n";
  m << "iteration=" << optim.iteration << "\n";
  m << "epoch=" << optim.epoch << "\n";
  for (const auto& e : params.entries()) {
    const std::string file = "params/" + e.name + ".pxt";
    save_pxt(e.tensor, (fs::path(dir) / file).string());
    m << "param " << e.name << " " << file << " " << (e.trainable ? 1 : 0) << " "
      << (e.decay ? 1 : 0) << "\n";
  }
  for (const auto& [name, t] : optim.velocity) {
    const std::string file = "optim/" + name + ".pxt";
    save_pxt(t, (fs::path(dir) / file).string());
    m << "optim " << name << " " << file << "\n";
  }
  for (const auto& [name, state] : rng_states) m << "rng " << name << " " << state << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream m(fs::path(dir) / "manifest.txt");
  PXL_CHECK(m.good(), CorruptionError, "no checkpoint manifest in '", dir, "'");
  std::string line;
  std::getline(m, line);
  PXL_CHECK(line == "pxck1", CorruptionError, "bad checkpoint magic in ", dir);
  Checkpoint ck;
  while (std::getline(m, line)) {
    std::istringstream is(line);
    std::string kind;
    if (line.rfind("iteration=", 0) == 0) {
      ck.optim.iteration = std::stoll(line.substr(10));
      continue;
    }
    if (line.rfind("epoch=", 0) == 0) {
      ck.optim.epoch = std::stoll(line.substr(6));
      continue;
    }
    is >> kind;
    if (kind == "param") {
      std::string name, file;
      int trainable = 1, decay = 0;
      is >> name >> file >> trainable >> decay;
      PXL_CHECK(is, CorruptionError, "malformed param line in checkpoint manifest: ", line);
      const fs::path p = fs::path(dir) / file;
      PXL_CHECK(fs::exists(p), CorruptionError, "checkpoint tensor '", name,
                "' is missing its file ", file);
      ck.params.add(name, load_pxt(p.string()), trainable == 1, decay == 1);
    } else if (kind == "optim") {
      std::string name, file;
      is >> name >> file;
      PXL_CHECK(is, CorruptionError, "malformed optim line in checkpoint manifest: ", line);
      const fs::path p = fs::path(dir) / file;
      PXL_CHECK(fs::exists(p), CorruptionError, "checkpoint velocity '", name,
                "' is missing its file ", file);
      ck.optim.velocity.emplace_back(name, load_pxt(p.string()));
    } else if (kind == "rng") {
      std::string name, state;
      is >> name >> state;
      PXL_CHECK(is, CorruptionError, "malformed rng line in checkpoint manifest: ", line);
      ck.rng_states[name] = std::stoull(state);
    }
  }
  return ck;
}

void restore_params(ParamSet& params, const ParamSet& loaded) {
  for (auto& e : params.entries()) {
    PXL_CHECK(loaded.contains(e.name), CorruptionError, "checkpoint is missing parameter '",
              e.name, "'");
    const Tensor& t = loaded.at(e.name);
    PXL_CHECK(t.shape() == e.tensor.shape() && t.mode() == e.tensor.mode(), CorruptionError,
              "checkpoint parameter '", e.name, "' has shape ", shape_str(t.shape()),
              ", model wants ", shape_str(e.tensor.shape()));
    e.tensor = t;
  }
}

}  // namespace pxl
