#include "pxl/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace pxl {

namespace {

enum class KeyType { Int, Float, Bool, Str, Enum, IntList, FloatList, StrList, Schedule, Stages };

struct KeySpec {
  const char* key;
  KeyType type;
  const char* def;
  double lo = 0, hi = 0;         // numeric range (inclusive) when lo <= hi
  const char* choices = nullptr; // enum alternatives, '|'-separated
  const char* doc = "";
};

// Every key the artifact understands, with its default.
const KeySpec kSchema[] = {
    {"task.kind", KeyType::Enum, "segmentation", 0, 0, "segmentation|normals|edges",
     "which pixel task to generate/train/evaluate"},
    {"task.size", KeyType::Int, "32", 16, 512, nullptr, "image side (power of 2)"},
    {"task.classes", KeyType::Int, "4", 2, 16, nullptr, "segmentation classes incl. background"},
    {"task.train_images", KeyType::Int, "60", 0, 1000000, nullptr, "training split size"},
    {"task.heldout_images", KeyType::Int, "12", 0, 1000000, nullptr, "held-out split size"},
    {"data.dir", KeyType::Str, "data", 0, 0, nullptr, "dataset directory (gen-data writes it)"},

    {"backbone.stages", KeyType::Stages, "2x8,2x16,2x32,2x64", 0, 0, nullptr,
     "convs x channels per stage; stride-2 pool between stages"},
    {"backbone.head_channels", KeyType::Int, "128", 1, 8192, nullptr, "1x1 head stage width"},
    {"backbone.taps", KeyType::StrList, "conv1_2,conv2_2,conv3_2,conv4_2,head", 0, 0, nullptr,
     "layers contributing hypercolumn slices"},
    {"backbone.batchnorm", KeyType::Bool, "true", 0, 0, nullptr,
     "batch-normalize every conv block"},
    {"backbone.init_sigma", KeyType::Float, "0.05", 0, 10, nullptr,
     "gaussian init sigma for conv weights"},

    {"head.hidden", KeyType::IntList, "128,128,128", 1, 65536, nullptr,
     "MLP hidden widths (empty = linear predictor)"},
    {"head.dropout", KeyType::Float, "0.5", 0, 0.999, nullptr, "dropout after each hidden relu"},
    {"head.init_sigma", KeyType::Float, "0.05", 0, 10, nullptr,
     "gaussian init sigma for fc weights (normals final layer gets 5x)"},
    {"head.feature_bn", KeyType::Bool, "false", 0, 0, nullptr,
     "batch-normalize hypercolumn rows before the predictor (linear baseline)"},

    {"train.lr0", KeyType::Float, "0.03", 1e-12, 100, nullptr, "initial learning rate"},
    {"train.momentum", KeyType::Float, "0.9", 0, 0.999, nullptr, "SGD momentum"},
    {"train.weight_decay", KeyType::Float, "0.0005", 0, 1, nullptr,
     "L2 decay on conv/fc weights"},
    {"train.schedule", KeyType::Schedule, "auto", 0, 0, nullptr,
     "iteration:multiplier list, or auto = two 10x cuts at thirds"},
    {"train.iterations", KeyType::Int, "2000", 0, 1000000000, nullptr, "SGD iterations"},
    {"train.images_per_batch", KeyType::Int, "5", 1, 4096, nullptr, "images per update (M)"},
    {"train.pixels_per_image", KeyType::Int, "256", 1, 1 << 24, nullptr,
     "sampled pixels per image (N)"},
    {"train.seed", KeyType::Int, "1", 0, i64(1) << 62, nullptr,
     "root seed; all named streams derive from it"},
    {"train.mode", KeyType::Enum, "standard", 0, 0, "standard|verification",
     "scalar width: standard = 32-bit, verification = 64-bit"},
    {"train.eval_every", KeyType::Int, "500", 0, 1000000000, nullptr,
     "held-out evaluation cadence (0 = final only)"},
    {"train.checkpoint_every", KeyType::Int, "0", 0, 1000000000, nullptr,
     "checkpoint cadence (0 = final only)"},
    {"train.resize_half_prob", KeyType::Float, "0", 0, 1, nullptr,
     "per-iteration chance to train the batch at half scale"},
    {"train.dump_batches", KeyType::Bool, "false", 0, 0, nullptr,
     "write sampled pixel sets to batches.csv"},

    {"sample.strategy", KeyType::Enum, "uniform", 0, 0, "uniform|biased",
     "pixel sampling strategy (biased needs the edge task)"},
    {"sample.rho", KeyType::Float, "0.5", 0, 1, nullptr, "positive fraction for biased sampling"},

    {"eval.scales", KeyType::FloatList, "1", 0.01, 4, nullptr, "test-time scale set"},
    {"eval.checkpoint", KeyType::Str, "", 0, 0, nullptr, "checkpoint directory to evaluate"},
    {"eval.budget_scalars", KeyType::Int, "67108864", 1, i64(1) << 62, nullptr,
     "dense-grid budget before strip tiling"},
    {"eval.export_maps", KeyType::Bool, "false", 0, 0, nullptr,
     "write prediction maps as PXT1 tensors"},

    {"bench.images_per_batch", KeyType::Int, "5", 1, 4096, nullptr, "bench batch images"},
    {"bench.pixels_per_image", KeyType::Int, "64", 1, 1 << 24, nullptr, "bench sampled pixels"},
    {"bench.warmup", KeyType::Int, "5", 0, 1000000, nullptr, "untimed warmup updates (min 5)"},
    {"bench.iterations", KeyType::Int, "20", 1, 1000000, nullptr, "timed updates (min 20)"},
    {"bench.budget_scalars", KeyType::Int, "268435456", 1, i64(1) << 62, nullptr,
     "refusal threshold for a pipeline's accounted footprint"},
    {"bench.sweep_points", KeyType::Int, "50", 0, 100000, nullptr,
     "randomized configs for the mode-ordering sweep"},
    {"bench.sweep_seed", KeyType::Int, "1", 0, i64(1) << 62, nullptr, "sweep rng seed"},

    {"ablate.seeds", KeyType::Int, "5", 1, 1000, nullptr, "seeds per grid point"},
    {"ablate.iterations", KeyType::Int, "800", 1, 1000000000, nullptr,
     "training budget per ablation run"},
    {"ablate.threads", KeyType::Int, "0", 0, 256, nullptr, "worker threads (0 = all cores)"},

    {"gradcheck.eps", KeyType::Float, "0.00001", 1e-12, 1, nullptr,
     "central-difference step"},
    {"gradcheck.tolerance", KeyType::Float, "0.00001", 1e-15, 1, nullptr,
     "max relative error accepted"},
};

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : kSchema)
    if (key == k.key) return &k;
  return nullptr;
}

std::string canonical_int(const std::string& raw, const KeySpec& spec, const char* where) {
  i64 v = 0;
  const auto* end = raw.data() + raw.size();
  auto [p, ec] = std::from_chars(raw.data(), end, v);
  PXL_CHECK(ec == std::errc() && p == end, ConfigError, where, ": '", raw,
            "' is not an integer for key ", spec.key);
  PXL_CHECK(double(v) >= spec.lo && double(v) <= spec.hi, ConfigError, where, ": ", spec.key,
            "=", v, " outside [", i64(spec.lo), ", ", i64(spec.hi), "]");
  return std::to_string(v);
}

std::string canonical_float(const std::string& raw, const KeySpec& spec, const char* where) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(raw, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  PXL_CHECK(used == raw.size(), ConfigError, where, ": '", raw, "' is not a number for key ",
            spec.key);
  PXL_CHECK(v >= spec.lo && v <= spec.hi, ConfigError, where, ": ", spec.key, "=", v,
            " outside [", spec.lo, ", ", spec.hi, "]");
  return format_double(v);
}

std::string canonical_bool(const std::string& raw, const KeySpec& spec, const char* where) {
  if (raw == "true" || raw == "1" || raw == "yes") return "true";
  if (raw == "false" || raw == "0" || raw == "no") return "false";
  throw ConfigError(cat(where, ": '", raw, "' is not a boolean for key ", spec.key));
}

std::string canonical_enum(const std::string& raw, const KeySpec& spec, const char* where) {
  std::istringstream is(spec.choices);
  std::string choice;
  while (std::getline(is, choice, '|'))
    if (raw == choice) return raw;
  throw ConfigError(cat(where, ": '", raw, "' is not one of {", spec.choices, "} for key ",
                        spec.key));
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(raw);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string canonical_value(const std::string& raw, const KeySpec& spec, const char* where) {
  switch (spec.type) {
    case KeyType::Int: return canonical_int(raw, spec, where);
    case KeyType::Float: return canonical_float(raw, spec, where);
    case KeyType::Bool: return canonical_bool(raw, spec, where);
    case KeyType::Str: return raw;
    case KeyType::Enum: return canonical_enum(raw, spec, where);
    case KeyType::IntList: {
      std::string out;
      for (const std::string& part : split_list(raw)) {
        if (!out.empty()) out += ',';
        out += canonical_int(part, spec, where);
      }
      return out;
    }
    case KeyType::FloatList: {
      std::string out;
      for (const std::string& part : split_list(raw)) {
        if (!out.empty()) out += ',';
        out += canonical_float(part, spec, where);
      }
      return out;
    }
    case KeyType::StrList: {
      std::string out;
      for (const std::string& part : split_list(raw)) {
        if (!out.empty()) out += ',';
        out += part;
      }
      return out;
    }
    case KeyType::Schedule: {
      if (raw == "auto") return "auto";
      std::string out;
      i64 prev = -1;
      for (const std::string& part : split_list(raw)) {
        const auto colon = part.find(':');
        PXL_CHECK(colon != std::string::npos, ConfigError, where,
                  ": schedule entries are iteration:multiplier, got '", part, "'");
        i64 it = 0;
        try {
          it = std::stoll(part.substr(0, colon));
        } catch (const std::exception&) {
          throw ConfigError(cat(where, ": bad schedule iteration in '", part, "'"));
        }
        double mult = 0;
        try {
          mult = std::stod(part.substr(colon + 1));
        } catch (const std::exception&) {
          throw ConfigError(cat(where, ": bad schedule multiplier in '", part, "'"));
        }
        PXL_CHECK(it > prev, ConfigError, where, ": schedule milestones must increase");
        PXL_CHECK(mult > 0, ConfigError, where, ": schedule multipliers must be positive");
        prev = it;
        if (!out.empty()) out += ',';
        out += std::to_string(it) + ":" + format_double(mult);
      }
      PXL_CHECK(!out.empty(), ConfigError, where, ": empty schedule (use 'auto')");
      return out;
    }
    case KeyType::Stages: {
      std::string out;
      for (const std::string& part : split_list(raw)) {
        const auto x = part.find('x');
        PXL_CHECK(x != std::string::npos, ConfigError, where,
                  ": stages entries are convsxchannels, got '", part, "'");
        i64 convs = 0, ch = 0;
        try {
          convs = std::stoll(part.substr(0, x));
          ch = std::stoll(part.substr(x + 1));
        } catch (const std::exception&) {
          throw ConfigError(cat(where, ": bad stage spec '", part, "'"));
        }
        PXL_CHECK(convs >= 1 && convs <= 16 && ch >= 1 && ch <= 8192, ConfigError, where,
                  ": stage spec '", part, "' out of range");
        if (!out.empty()) out += ',';
        out += std::to_string(convs) + "x" + std::to_string(ch);
      }
      PXL_CHECK(!out.empty(), ConfigError, where, ": need at least one stage");
      return out;
    }
  }
  throw ConfigError("unhandled key type");
}

}  // namespace

const std::string& Config::get(const std::string& key) const {
  auto it = values.find(key);
  PXL_CHECK(it != values.end(), ConfigError, "unknown config key '", key, "'");
  return it->second;
}

i64 Config::geti(const std::string& key) const { return std::stoll(get(key)); }
double Config::getf(const std::string& key) const { return std::stod(get(key)); }
bool Config::getb(const std::string& key) const { return get(key) == "true"; }

std::vector<i64> Config::int_list(const std::string& key) const {
  std::vector<i64> out;
  for (const auto& p : split_list(get(key))) out.push_back(std::stoll(p));
  return out;
}

std::vector<double> Config::float_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& p : split_list(get(key))) out.push_back(std::stod(p));
  return out;
}

std::vector<std::string> Config::str_list(const std::string& key) const {
  return split_list(get(key));
}

std::vector<std::pair<i64, double>> Config::schedule(const std::string& key) const {
  const std::string& raw = get(key);
  std::vector<std::pair<i64, double>> out;
  if (raw == "auto") return out;
  for (const auto& p : split_list(raw)) {
    const auto colon = p.find(':');
    out.emplace_back(std::stoll(p.substr(0, colon)), std::stod(p.substr(colon + 1)));
  }
  return out;
}

Config default_config() {
  Config cfg;
  for (const auto& k : kSchema) cfg.values[k.key] = canonical_value(k.def, k, "default");
  return cfg;
}

Config parse_config(const std::string& text) {
  Config cfg = default_config();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto notspace = line.find_first_not_of(" \t\r");
    if (notspace == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(notspace, last - notspace + 1);
    const auto eq = line.find('=');
    PXL_CHECK(eq != std::string::npos, ConfigError, "line ", lineno, ", col 1: expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const KeySpec* spec = find_key(key);
    PXL_CHECK(spec != nullptr, ConfigError, "line ", lineno, ", col 1: unknown key '", key, "'");
    PXL_CHECK(seen.count(key) == 0, ConfigError, "line ", lineno, ", col 1: duplicate key '",
              key, "' (first at line ", seen[key], ")");
    seen[key] = lineno;
    const std::string where = cat("line ", lineno, ", col ", eq + 2);
    cfg.values[key] = canonical_value(value, *spec, where.c_str());
  }
  return cfg;
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  PXL_CHECK(eq != std::string::npos, ConfigError, "override '", assignment,
            "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const KeySpec* spec = find_key(key);
  PXL_CHECK(spec != nullptr, ConfigError, "override: unknown key '", key, "'");
  cfg.values[key] = canonical_value(assignment.substr(eq + 1), *spec, "override");
}

std::string render_config(const Config& cfg) {
  std::string out;
  for (const auto& k : kSchema) {  // schema order groups sections
    auto it = cfg.values.find(k.key);
    out += k.key;
    out += '=';
    out += it == cfg.values.end() ? canonical_value(k.def, k, "default") : it->second;
    out += '\n';
  }
  return out;
}

std::vector<ConfigKeyDoc> config_schema_docs() {
  std::vector<ConfigKeyDoc> out;
  for (const auto& k : kSchema) {
    const char* type = "";
    switch (k.type) {
      case KeyType::Int: type = "int"; break;
      case KeyType::Float: type = "float"; break;
      case KeyType::Bool: type = "bool"; break;
      case KeyType::Str: type = "string"; break;
      case KeyType::Enum: type = "enum"; break;
      case KeyType::IntList: type = "int list"; break;
      case KeyType::FloatList: type = "float list"; break;
      case KeyType::StrList: type = "string list"; break;
      case KeyType::Schedule: type = "schedule"; break;
      case KeyType::Stages: type = "stages"; break;
    }
    out.push_back({k.key, type, k.def, k.doc});
  }
  return out;
}

TaskKind config_task(const Config& cfg) { return task_from_name(cfg.get("task.kind")); }

BackboneSpec config_backbone(const Config& cfg) {
  BackboneSpec spec;
  spec.stages.clear();
  for (const auto& part : cfg.str_list("backbone.stages")) {
    const auto x = part.find('x');
    spec.stages.push_back({int(std::stoll(part.substr(0, x))), std::stoll(part.substr(x + 1))});
  }
  spec.head_channels = cfg.geti("backbone.head_channels");
  spec.taps = cfg.str_list("backbone.taps");
  spec.batchnorm = cfg.getb("backbone.batchnorm");
  spec.init_sigma = cfg.getf("backbone.init_sigma");
  spec.in_channels = 3;
  return spec;
}

MlpSpec config_head(const Config& cfg) {
  MlpSpec spec;
  spec.hidden = cfg.int_list("head.hidden");
  spec.dropout = cfg.getf("head.dropout");
  spec.init_sigma = cfg.getf("head.init_sigma");
  spec.feature_bn = cfg.getb("head.feature_bn");
  return spec;
}

TrainConfig config_train(const Config& cfg) {
  TrainConfig t;
  t.lr0 = cfg.getf("train.lr0");
  t.momentum = cfg.getf("train.momentum");
  t.weight_decay = cfg.getf("train.weight_decay");
  t.schedule = cfg.schedule("train.schedule");
  t.iterations = cfg.geti("train.iterations");
  t.images_per_batch = cfg.geti("train.images_per_batch");
  t.pixels_per_image = cfg.geti("train.pixels_per_image");
  t.seed = u64(cfg.geti("train.seed"));
  t.mode = cfg.get("train.mode") == "verification" ? ScalarMode::f64 : ScalarMode::f32;
  t.eval_every = cfg.geti("train.eval_every");
  t.checkpoint_every = cfg.geti("train.checkpoint_every");
  t.resize_half_prob = cfg.getf("train.resize_half_prob");
  t.strategy = strategy_from_name(cfg.get("sample.strategy"));
  t.rho = cfg.getf("sample.rho");
  t.eval_scales = cfg.float_list("eval.scales");
  t.eval_budget = cfg.geti("eval.budget_scalars");
  validate(t);
  return t;
}

BenchConfig config_bench(const Config& cfg) {
  BenchConfig b;
  b.task = config_task(cfg);
  b.classes = cfg.geti("task.classes");
  b.image_size = cfg.geti("task.size");
  b.images_per_batch = cfg.geti("bench.images_per_batch");
  b.pixels_per_image = cfg.geti("bench.pixels_per_image");
  b.warmup = cfg.geti("bench.warmup");
  b.iterations = cfg.geti("bench.iterations");
  b.budget_scalars = cfg.geti("bench.budget_scalars");
  b.seed = u64(cfg.geti("bench.sweep_seed"));
  return b;
}

}  // namespace pxl
