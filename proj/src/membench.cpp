#include "pxl/membench.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include "pxl/heads.hpp"
#include "pxl/kernels.hpp"
#include "pxl/ops.hpp"
#include "pxl/trainer.hpp"

namespace pxl {

const char* pipeline_name(PipelineMode m) {
  switch (m) {
    case PipelineMode::dense_upsample: return "dense_upsample";
    case PipelineMode::masked_dense: return "masked_dense";
    case PipelineMode::sampled: return "sampled";
  }
  return "?";
}

PipelineMode pipeline_from_name(const std::string& name) {
  if (name == "dense_upsample") return PipelineMode::dense_upsample;
  if (name == "masked_dense") return PipelineMode::masked_dense;
  if (name == "sampled") return PipelineMode::sampled;
  throw ConfigError(cat("unknown pipeline mode '", name, "'"));
}

MemoryReport account_memory(PipelineMode mode, const BackboneSpec& backbone, i64 image_size,
                            i64 images_per_batch, i64 pixels_per_image, const MlpSpec& head) {
  PXL_CHECK(image_size >= backbone_max_stride(backbone), ConfigError,
            "image smaller than the backbone pool stack");
  PXL_CHECK(pixels_per_image >= 1 && pixels_per_image <= image_size * image_size, ConfigError,
            "pixels_per_image out of range");
  const i64 M = images_per_batch;
  const i64 HW = image_size * image_size;
  const i64 N = pixels_per_image;
  const auto tap_metas = backbone_tap_metas(backbone);
  const i64 taps = static_cast<i64>(tap_metas.size());
  const i64 D = hypercolumn_dim(backbone);

  MemoryReport rep;
  rep.mode = mode;
  auto put = [&](const std::string& name, i64 scalars) {
    rep.breakdown.emplace_back(name, scalars);
    rep.peak_scalars += scalars;
  };

  put("input", M * backbone.in_channels * HW);

  // backbone activations: per conv block the tape retains the conv output,
  // the normalized output (+ the saved x-hat and inverse std), and the relu
  // output; pools retain their output. Gradients mirror every op output.
  i64 act = 0, bn_saved = 0;
  i64 side = image_size;
  for (size_t s = 0; s < backbone.stages.size(); ++s) {
    const i64 ch = backbone.stages[s].channels;
    for (int c = 0; c < backbone.stages[s].num_convs; ++c) {
      const i64 plane = M * ch * side * side;
      act += plane;                     // conv out
      if (backbone.batchnorm) {
        act += plane;                   // bn out
        bn_saved += plane + ch;         // saved x-hat + invstd
      }
      act += plane;                     // relu out
    }
    if (s + 1 < backbone.stages.size()) {
      side /= 2;
      act += M * ch * side * side;      // pool out
    }
  }
  {
    const i64 plane = M * backbone.head_channels * side * side;
    act += plane;
    if (backbone.batchnorm) {
      act += plane;
      bn_saved += plane + backbone.head_channels;
    }
    act += plane;
  }
  put("backbone_activations", act);
  put("backbone_saved_batchnorm", bn_saved);
  put("backbone_gradients", act);

  // parameters, their gradients and velocities, counted off a real build
  {
    ParamSet ps;
    Rng rng(0);
    BackboneSpec b = backbone;
    MlpSpec h = head;
    init_backbone(b, ps, rng, ScalarMode::f32);
    init_mlp(h, D, ps, rng, ScalarMode::f32);
    i64 total = 0, trainable = 0;
    for (const auto& e : ps.entries()) {
      total += e.tensor.numel();
      if (e.trainable) trainable += e.tensor.numel();
    }
    put("parameters", total);
    put("parameter_gradients", trainable);
    put("optimizer_velocity", trainable);
  }

  // the hypercolumn stage is where the three pipelines diverge
  const i64 prov_per_row = taps * 8;  // 4 cells + 4 weights per tap
  i64 stage = 0, stage_grads = 0;
  i64 mlp_rows = M * N;
  switch (mode) {
    case PipelineMode::sampled:
      stage = M * N * D + M * N * prov_per_row;
      stage_grads = M * N * D;
      break;
    case PipelineMode::masked_dense:
      // full grid, its provenance, and the masked copy the MLP consumes
      stage = M * HW * D + M * HW * prov_per_row + M * N * D;
      stage_grads = M * HW * D + M * N * D;
      break;
    case PipelineMode::dense_upsample:
      // per-tap full-resolution copies plus the concatenated grid
      stage = 2 * M * HW * D + M * HW * prov_per_row;
      stage_grads = 2 * M * HW * D;
      mlp_rows = M * HW;
      break;
  }
  rep.hypercolumn_stage_scalars = stage;
  put("hypercolumn_stage", stage);
  put("hypercolumn_gradients", stage_grads);

  // MLP: matmul out + bias out per layer, relu + dropout (+mask) per hidden
  i64 mlp = 0;
  i64 width = D;
  for (size_t i = 0; i < head.hidden.size() + 1; ++i) {
    const bool last = i == head.hidden.size();
    const i64 next = last ? head.out_width : head.hidden[i];
    mlp += 2 * mlp_rows * next;  // matmul + bias add
    if (!last) {
      mlp += mlp_rows * next;  // relu
      if (head.dropout > 0) mlp += 2 * mlp_rows * next;  // dropout out + mask
    }
    width = next;
  }
  (void)width;
  if (mode == PipelineMode::dense_upsample) mlp += M * N * head.out_width;  // masked outputs
  put("mlp_activations", mlp);
  put("mlp_gradients", mlp);
  put("loss", 2);
  return rep;
}

std::string host_descriptor() {
  std::string cpu = "unknown-cpu";
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return cat(cpu, " / ", std::thread::hardware_concurrency(), " threads / ",
             kernels::backend_name(kernels::active_backend()), " kernels");
}

i64 rss_high_water_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      i64 kb = 0;
      std::sscanf(line.c_str(), "VmHWM: %lld", reinterpret_cast<long long*>(&kb));
      return kb;
    }
  }
  return -1;
}

namespace {

// One forward/backward/update under the chosen pipeline.
void run_iteration(PipelineMode mode, Model& model, const SyntheticDataset& ds,
                   const BenchConfig& cfg, OptimState& state, Rng& sample, Rng& dropout) {
  PixelBatch batch = build_batch(ds, cfg.images_per_batch, cfg.pixels_per_image,
                                 SampleStrategy::uniform, 0.0, sample);
  Graph g(model.mode);
  Var input = g.input(make_batch_input(ds, batch.image_ids, model.mode));
  ParamBinding binding;
  const i64 H = cfg.image_size, W = cfg.image_size;
  Var logits{nullptr, -1};

  if (mode == PipelineMode::sampled) {
    logits = model_logits(g, model, input, batch.pixels, true, dropout, &binding);
  } else {
    FeatureMapSet fmaps =
        backbone_forward(g, model.backbone, model.params, input, true, &binding);
    std::vector<Var> grids;
    for (i64 m = 0; m < cfg.images_per_batch; ++m) {
      if (mode == PipelineMode::dense_upsample) {
        // materialize each tap's full-resolution copy before the
        // concatenated grid (the copies are what the naive pipeline keeps)
        for (size_t t = 0; t < fmaps.taps.size(); ++t) {
          FeatureMapSet one;
          one.taps = {fmaps.taps[t]};
          one.metas = {fmaps.metas[t]};
          (void)dense_hypercolumn(one, m, H, W, cfg.budget_scalars);
        }
      }
      grids.push_back(dense_hypercolumn(fmaps, m, H, W, cfg.budget_scalars).features);
    }
    Var joined = ops::concat_rows(grids);  // [M*HW x D]
    std::vector<i64> rows;  // sampled pixels as joined-grid row ids, batch order
    for (const PixelRef& p : batch.pixels)
      rows.push_back(p.image * H * W + p.coord.row * W + p.coord.col);
    if (mode == PipelineMode::masked_dense) {
      Var masked = ops::row_select(joined, rows);
      logits = mlp_forward(g, model.head, model.params, masked, true, dropout, &binding);
    } else {
      Var dense_out = mlp_forward(g, model.head, model.params, joined, true, dropout, &binding);
      logits = ops::row_select(dense_out, rows);
    }
  }

  Var loss = task_loss(logits, batch);
  g.backward(loss);
  sgd_step(model.params, binding, g, state, 1e-3, 0.9, 5e-4, false);
}

}  // namespace

ThroughputReport measure_throughput(PipelineMode mode, const BenchConfig& cfg) {
  PXL_CHECK(cfg.iterations >= 1, ContractError, "need at least one timed iteration");
  MemoryReport mem = account_memory(mode, BackboneSpec{}, cfg.image_size, cfg.images_per_batch,
                                    cfg.pixels_per_image, MlpSpec{});
  if (mem.peak_scalars > cfg.budget_scalars)
    throw ResourceError(cat(pipeline_name(mode), " needs ", mem.peak_scalars,
                            " scalars, budget is ", cfg.budget_scalars),
                        mem.peak_scalars);

  SyntheticDataset ds = generate_dataset(cfg.task, cfg.seed, cfg.images_per_batch,
                                         cfg.image_size, cfg.classes);
  Model model = build_model(cfg.task, cfg.classes, BackboneSpec{}, MlpSpec{}, cfg.seed,
                            ScalarMode::f32);
  OptimState state = make_optim_state(model.params);
  Rng sample = Rng::stream(cfg.seed, "pixel-sampling");
  Rng dropout = Rng::stream(cfg.seed, "dropout");

  ThroughputReport rep;
  rep.mode = mode;
  rep.warmup_iterations = std::max<i64>(5, cfg.warmup);
  rep.timed_iterations = std::max<i64>(20, cfg.iterations);
  rep.host = host_descriptor();
  rep.config_echo = cat("task=", task_name(cfg.task), " size=", cfg.image_size, " M=",
                        cfg.images_per_batch, " N=", cfg.pixels_per_image);

  for (i64 i = 0; i < rep.warmup_iterations; ++i)
    run_iteration(mode, model, ds, cfg, state, sample, dropout);
  const auto start = std::chrono::steady_clock::now();
  for (i64 i = 0; i < rep.timed_iterations; ++i)
    run_iteration(mode, model, ds, cfg, state, sample, dropout);
  const auto stop = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(stop - start).count();
  rep.updates_per_second = static_cast<double>(rep.timed_iterations) / secs;
  return rep;
}

}  // namespace pxl
