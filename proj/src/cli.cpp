#include "pxl/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pxl/config.hpp"

namespace pxl {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

Config resolve_config(const CommonArgs& args) {
  Config cfg;
  if (args.config_path.empty()) {
    cfg = default_config();
  } else {
    std::ifstream f(args.config_path);
    PXL_CHECK(f.good(), ConfigError, "cannot read config file '", args.config_path, "'");
    std::stringstream ss;
    ss << f.rdbuf();
    cfg = parse_config(ss.str());
  }
  for (const std::string& kv : args.overrides) apply_override(cfg, kv);
  return cfg;
}

// Every run directory starts with the resolved configuration so rerunning it
// reproduces the run.
void echo_config(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "config.txt");
  f << render_config(cfg);
}

void write_metrics_csv(const std::string& path, const std::string& checkpoint,
                       const std::string& task, const std::string& scales,
                       const std::map<std::string, double>& metrics) {
  std::ofstream f(path);
  f << "checkpoint,task,scales,metric,value\n";
  for (const auto& [k, v] : metrics)
    f << checkpoint << ',' << task << ',' << scales << ',' << k << ',' << format_double(v)
      << '\n';
}

std::string scales_label(const std::vector<double>& scales) {
  std::string out;
  for (double s : scales) {
    if (!out.empty()) out += '+';
    out += format_double(s);
  }
  return out;
}

int cmd_gen_data(const Config& cfg, const std::string& out_dir) {
  const TaskKind kind = config_task(cfg);
  const u64 seed = u64(cfg.geti("train.seed"));
  const i64 size = cfg.geti("task.size");
  const i64 classes = cfg.geti("task.classes");
  const std::string dir = cfg.get("data.dir");

  SyntheticDataset tr = generate_dataset(kind, seed, cfg.geti("task.train_images"), size, classes);
  save_dataset(tr, (fs::path(dir) / "train").string());
  SyntheticDataset he =
      generate_dataset(kind, seed + 1, cfg.geti("task.heldout_images"), size, classes);
  save_dataset(he, (fs::path(dir) / "heldout").string());

  std::ofstream log(fs::path(out_dir) / "gen-data.txt");
  log << "task=" << task_name(kind) << "\ntrain_images=" << tr.count()
      << "\nheldout_images=" << he.count() << "\nsize=" << size << "\n";
  if (kind == TaskKind::edges)
    log << "train_pos_rate=" << format_double(tr.pos_rate)
        << "\nheldout_pos_rate=" << format_double(he.pos_rate) << "\n";
  std::cout << "wrote " << tr.count() << "+" << he.count() << " images under " << dir << "\n";
  return 0;
}

SyntheticDataset load_split(const Config& cfg, const char* split) {
  const fs::path path = fs::path(cfg.get("data.dir")) / split;
  try {
    return load_dataset(path.string());
  } catch (const CorruptionError&) {
    throw ConfigError(cat("no dataset at '", path.string(),
                          "'; run: pixellab gen-data --set data.dir=", cfg.get("data.dir")));
  }
}

int cmd_train(const Config& cfg, const std::string& out_dir) {
  SyntheticDataset tr = load_split(cfg, "train");
  SyntheticDataset he = load_split(cfg, "heldout");
  PXL_CHECK(tr.kind == config_task(cfg), ConfigError,
            "dataset task does not match task.kind (regenerate with gen-data)");

  TrainConfig tcfg = config_train(cfg);
  Model model = build_model(config_task(cfg), cfg.geti("task.classes"), config_backbone(cfg),
                            config_head(cfg), tcfg.seed, tcfg.mode);

  std::ofstream dump;
  if (cfg.getb("train.dump_batches")) dump.open(fs::path(out_dir) / "batches.csv");
  const std::string ckdir = (fs::path(out_dir) / "checkpoint").string();
  TrainResult res =
      train(model, tr, &he, tcfg, ckdir, "", cfg.getb("train.dump_batches") ? &dump : nullptr);

  std::ofstream log(fs::path(out_dir) / "train_log.csv");
  write_train_log_csv(res, log);
  if (!res.final_metrics.empty())
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), ckdir,
                      task_name(model.task), scales_label(tcfg.eval_scales),
                      res.final_metrics);
  if (res.aborted) {
    std::cerr << "error: " << res.abort_reason << "\n";
    return 1;
  }
  std::cout << "trained " << res.log.size() << " iterations";
  for (const auto& [k, v] : res.final_metrics) std::cout << " " << k << "=" << v;
  std::cout << "\n";
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& out_dir) {
  const std::string ckpt = cfg.get("eval.checkpoint");
  PXL_CHECK(!ckpt.empty(), ConfigError,
            "eval needs eval.checkpoint=<dir> (a train run writes one under its --out)");
  SyntheticDataset he = load_split(cfg, "heldout");
  TrainConfig tcfg = config_train(cfg);
  Model model = build_model(config_task(cfg), cfg.geti("task.classes"), config_backbone(cfg),
                            config_head(cfg), tcfg.seed, tcfg.mode);
  restore_params(model.params, load_checkpoint(ckpt).params);

  auto metrics = evaluate(model, he, tcfg.eval_scales, tcfg.eval_budget);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), ckpt, task_name(model.task),
                    scales_label(tcfg.eval_scales), metrics);
  if (cfg.getb("eval.export_maps")) {
    fs::create_directories(fs::path(out_dir) / "maps");
    char name[64];
    for (i64 i = 0; i < he.count(); ++i) {
      PredictionMap pm = predict_multiscale(model, he.images[size_t(i)], tcfg.eval_scales,
                                            tcfg.eval_budget);
      std::snprintf(name, sizeof name, "maps/pred_%05lld.pxt", (long long)i);
      save_pxt(pm.map, (fs::path(out_dir) / name).string());
    }
  }
  for (const auto& [k, v] : metrics) std::cout << k << "=" << v << "\n";
  return 0;
}

int cmd_grad_check(const Config& cfg, const std::string& out_dir) {
  const double eps = cfg.getf("gradcheck.eps");
  const double tol = cfg.getf("gradcheck.tolerance");
  const u64 seed = u64(cfg.geti("train.seed"));
  std::ofstream csv(fs::path(out_dir) / "gradcheck.csv");
  csv << "task,max_rel_err,worst_param,worst_index\n";
  bool ok = true;
  for (TaskKind kind : {TaskKind::segmentation, TaskKind::normals, TaskKind::edges}) {
    GradCheckReport rep = pipeline_grad_check(kind, seed, eps);
    csv << task_name(kind) << ',' << format_double(rep.max_rel_err) << ',' << rep.worst_param
        << ',' << rep.worst_index << '\n';
    std::cout << task_name(kind) << " max_rel_err=" << rep.max_rel_err << " (worst "
              << rep.worst_param << "[" << rep.worst_index << "])\n";
    ok = ok && rep.max_rel_err <= tol;
  }
  if (!ok) {
    std::cerr << "error: gradient check exceeded tolerance " << tol << "\n";
    return 1;
  }
  return 0;
}

int cmd_bench(const Config& cfg, const std::string& out_dir) {
  BenchConfig bcfg = config_bench(cfg);
  const BackboneSpec backbone = config_backbone(cfg);
  const MlpSpec head = config_head(cfg);

  std::ofstream mem(fs::path(out_dir) / "memory.csv");
  mem << "mode,peak_scalars,hypercolumn_stage_scalars,rss_hwm_kb,breakdown\n";
  for (PipelineMode mode :
       {PipelineMode::dense_upsample, PipelineMode::masked_dense, PipelineMode::sampled}) {
    MemoryReport r = account_memory(mode, backbone, bcfg.image_size, bcfg.images_per_batch,
                                    bcfg.pixels_per_image, head);
    std::string blob;
    for (const auto& [k, v] : r.breakdown) blob += k + "=" + std::to_string(v) + ";";
    mem << pipeline_name(mode) << ',' << r.peak_scalars << ',' << r.hypercolumn_stage_scalars
        << ',' << rss_high_water_kb() << ',' << blob << '\n';
    std::cout << pipeline_name(mode) << ": peak " << r.peak_scalars << " scalars, stage "
              << r.hypercolumn_stage_scalars << "\n";
  }

  std::ofstream thr(fs::path(out_dir) / "throughput.csv");
  thr << "mode,updates_per_second,timed,warmup,status,host\n";
  for (PipelineMode mode :
       {PipelineMode::dense_upsample, PipelineMode::masked_dense, PipelineMode::sampled}) {
    try {
      ThroughputReport r = measure_throughput(mode, bcfg);
      thr << pipeline_name(mode) << ',' << format_double(r.updates_per_second) << ','
          << r.timed_iterations << ',' << r.warmup_iterations << ",ok," << r.host << '\n';
      std::cout << pipeline_name(mode) << ": " << r.updates_per_second << " updates/s\n";
    } catch (const ResourceError& e) {
      thr << pipeline_name(mode) << ",,,,infeasible: needs " << e.required_scalars
          << " scalars," << host_descriptor() << '\n';
      std::cout << pipeline_name(mode) << ": infeasible under budget (needs "
                << e.required_scalars << " scalars)\n";
    }
  }

  // randomized mode-ordering sweep
  const i64 points = cfg.geti("bench.sweep_points");
  if (points > 0) {
    std::ofstream sw(fs::path(out_dir) / "sweep.csv");
    sw << "point,size,M,N,dense_upsample,masked_dense,sampled,ordered\n";
    Rng rng(u64(cfg.geti("bench.sweep_seed")));
    i64 ordered = 0;
    for (i64 p = 0; p < points; ++p) {
      BackboneSpec rb;
      rb.stages.clear();
      const i64 n_stages = 2 + i64(rng.below(3));
      i64 ch = 8 << rng.below(2);
      for (i64 s = 0; s < n_stages; ++s) {
        rb.stages.push_back({1 + int(rng.below(2)), ch});
        ch *= 2;
      }
      rb.head_channels = ch;
      rb.taps.clear();
      for (i64 s = 0; s < n_stages; ++s)
        rb.taps.push_back(cat("conv", s + 1, "_", rb.stages[size_t(s)].num_convs));
      rb.taps.push_back("head");
      const i64 size = backbone_max_stride(rb) * (2 << rng.below(3));
      const i64 M = 1 + i64(rng.below(6));
      const i64 N = 1 + i64(rng.below(u64(size * size - 1)));
      MlpSpec rh;
      rh.hidden = {32 << rng.below(3)};
      const i64 du = account_memory(PipelineMode::dense_upsample, rb, size, M, N, rh).peak_scalars;
      const i64 md = account_memory(PipelineMode::masked_dense, rb, size, M, N, rh).peak_scalars;
      const i64 sa = account_memory(PipelineMode::sampled, rb, size, M, N, rh).peak_scalars;
      const bool ok = du >= md && md >= sa;
      ordered += ok ? 1 : 0;
      sw << p << ',' << size << ',' << M << ',' << N << ',' << du << ',' << md << ',' << sa
         << ',' << (ok ? 1 : 0) << '\n';
    }
    std::cout << "sweep: " << ordered << "/" << points << " points ordered\n";
    if (ordered != points) {
      std::cerr << "error: pipeline memory ordering violated on the sweep\n";
      return 1;
    }
  }
  return 0;
}

int cmd_ablate(const Config& cfg, const std::string& out_dir, const std::string& name) {
  AblationOutcome out = run_ablation(name, out_dir, cfg.geti("ablate.seeds"),
                                     cfg.geti("ablate.iterations"), cfg.geti("ablate.threads"));
  for (const AblationArm& arm : ablation_arms(name, cfg.geti("ablate.iterations"))) {
    i64 n_ok = 0;
    for (const auto& r : out.rows)
      if (r.arm == arm.label && r.status == "ok") ++n_ok;
    if (n_ok > 0)
      std::cout << arm.label << ": median metric " << out.arm_median(arm.label, true)
                << ", median final loss " << out.arm_median(arm.label, false) << " (" << n_ok
                << " runs)\n";
    else
      std::cout << arm.label << ": no completed runs\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"sparse-hypercolumn pixel prediction lab"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string ablation_name;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "config file (key=value lines)");
    sub->add_option("--set", args.overrides, "override key=value (repeatable, wins over file)")
        ->take_all();
    sub->add_option("--out", args.out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic train/heldout splits");
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on the generated data");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  CLI::App* bench = app.add_subcommand("bench", "memory accounting and throughput comparison");
  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference check of the full pipeline");
  CLI::App* ablate = app.add_subcommand("ablate", "run a registered ablation grid");
  std::string names;
  for (const auto& n : registered_ablations()) names += (names.empty() ? "" : ", ") + n;
  ablate->add_option("name", ablation_name, "one of: " + names)->required();
  for (CLI::App* sub : {gen, train_cmd, eval_cmd, bench, gc, ablate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const std::string sub = app.get_subcommands().front()->get_name();
    if (args.out_dir.empty()) args.out_dir = "out-" + sub;
    Config cfg = resolve_config(args);
    echo_config(cfg, args.out_dir);
    if (sub == "gen-data") return cmd_gen_data(cfg, args.out_dir);
    if (sub == "train") return cmd_train(cfg, args.out_dir);
    if (sub == "eval") return cmd_eval(cfg, args.out_dir);
    if (sub == "bench") return cmd_bench(cfg, args.out_dir);
    if (sub == "grad-check") return cmd_grad_check(cfg, args.out_dir);
    if (sub == "ablate") return cmd_ablate(cfg, args.out_dir, ablation_name);
    std::cerr << "error: unknown subcommand " << sub << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pxl
