#pragma once

#include <map>
#include <string>
#include <vector>

#include "pxl/ablation.hpp"
#include "pxl/membench.hpp"

namespace pxl {

// Flat key=value document with dotted sections. Every key has a typed schema
// entry and a documented default; unknown keys are rejected with their
// location. Values are stored canonically, so parse(render(c)) == c.
struct Config {
  std::map<std::string, std::string> values;

  const std::string& get(const std::string& key) const;
  i64 geti(const std::string& key) const;
  double getf(const std::string& key) const;
  bool getb(const std::string& key) const;
  std::vector<i64> int_list(const std::string& key) const;
  std::vector<double> float_list(const std::string& key) const;
  std::vector<std::string> str_list(const std::string& key) const;
  // "auto" resolves against total at use time; rendered literally
  std::vector<std::pair<i64, double>> schedule(const std::string& key) const;

  bool operator==(const Config& other) const { return values == other.values; }
};

struct ConfigKeyDoc {
  std::string key;
  std::string type;
  std::string def;
  std::string doc;
};

Config default_config();
Config parse_config(const std::string& text);
// "key=value"; overrides win over file values.
void apply_override(Config& cfg, const std::string& assignment);
std::string render_config(const Config& cfg);
std::vector<ConfigKeyDoc> config_schema_docs();

// Domain builders from a validated config.
TaskKind config_task(const Config& cfg);
BackboneSpec config_backbone(const Config& cfg);
MlpSpec config_head(const Config& cfg);
TrainConfig config_train(const Config& cfg);
BenchConfig config_bench(const Config& cfg);

}  // namespace pxl
