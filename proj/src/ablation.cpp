#include "pxl/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "pxl/svg.hpp"

namespace pxl {

namespace fs = std::filesystem;

std::vector<double> AblationOutcome::arm_values(const std::string& arm, bool primary) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.arm == arm && r.status == "ok") out.push_back(primary ? r.primary : r.final_loss);
  return out;
}

double AblationOutcome::arm_median(const std::string& arm, bool primary) const {
  std::vector<double> v = arm_values(arm, primary);
  PXL_CHECK(!v.empty(), ContractError, "no completed runs for arm '", arm, "'");
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

const AblationRow* AblationOutcome::find(const std::string& arm, u64 seed) const {
  for (const auto& r : rows)
    if (r.arm == arm && r.seed == seed) return &r;
  return nullptr;
}

std::vector<std::string> registered_ablations() {
  return {"sampling_fraction", "diversity", "bias_rho", "mlp_width", "multiscale", "batchnorm"};
}

std::vector<AblationArm> ablation_arms(const std::string& name, i64 iterations) {
  AblationArm base;
  base.head.init_sigma = 0.05;
  base.train.lr0 = 0.03;
  base.train.iterations = iterations;
  base.train.eval_every = 0;

  std::vector<AblationArm> arms;
  if (name == "sampling_fraction") {
    // all pixels vs a 4% sample, equal iteration budget
    AblationArm all = base;
    all.label = "all_pixels";
    all.train.pixels_per_image = 32 * 32;
    AblationArm pct = base;
    pct.label = "pct4";
    pct.train.pixels_per_image = 41;  // 4% of 1024
    arms = {all, pct};
  } else if (name == "diversity") {
    // equal pixels per update, spread across many images or few; 64x64
    // images so the single-image arm can hold 1280 distinct pixels
    AblationArm wide = base, narrow = base;
    for (AblationArm* a : {&wide, &narrow}) {
      a->image_size = 64;
      a->n_train = 48;
      a->n_heldout = 10;
    }
    wide.label = "m5_n256";
    wide.train.images_per_batch = 5;
    wide.train.pixels_per_image = 256;
    narrow.label = "m1_n1280";
    narrow.train.images_per_batch = 1;
    narrow.train.pixels_per_image = 1280;
    arms = {wide, narrow};
  } else if (name == "bias_rho") {
    for (double rho : {-1.0, 0.25, 0.5, 0.75}) {
      AblationArm a = base;
      a.task = TaskKind::edges;
      a.classes = 0;
      if (rho < 0) {
        a.label = "uniform";
        a.train.strategy = SampleStrategy::uniform;
      } else {
        a.label = cat("rho", i64(rho * 100));
        a.train.strategy = SampleStrategy::biased;
        a.train.rho = rho;
      }
      arms.push_back(a);
    }
  } else if (name == "mlp_width") {
    for (i64 w : {i64(32), i64(64), i64(128)}) {
      AblationArm a = base;
      a.label = cat("w", w);
      a.head.hidden = {w, w, w};
      arms.push_back(a);
    }
  } else if (name == "multiscale") {
    // trained with scale jitter; evaluated single- vs multi-scale
    AblationArm single = base, multi = base;
    for (AblationArm* a : {&single, &multi}) a->train.resize_half_prob = 0.5;
    single.label = "eval_1x";
    single.train.eval_scales = {1.0};
    multi.label = "eval_05x_1x";
    multi.train.eval_scales = {0.5, 1.0};
    arms = {single, multi};
  } else if (name == "batchnorm") {
    AblationArm on = base, off = base;
    on.label = "bn_on";
    off.label = "bn_off";
    off.backbone.batchnorm = false;
    arms = {on, off};
  } else {
    throw ConfigError(cat("no registered ablation named '", name, "'"));
  }
  return arms;
}

std::string arm_config_hash(const AblationArm& arm, u64 seed) {
  std::ostringstream os;
  os << arm.label << '|' << task_name(arm.task) << '|' << arm.image_size << '|' << arm.classes
     << '|' << arm.n_train << '|' << arm.n_heldout << '|' << arm.data_seed << '|';
  os << arm.backbone.in_channels << '|';
  for (const auto& s : arm.backbone.stages) os << s.num_convs << 'x' << s.channels << ',';
  os << '|' << arm.backbone.head_channels << '|' << arm.backbone.batchnorm << '|'
     << arm.backbone.init_sigma << '|';
  for (const auto& t : arm.backbone.taps) os << t << ',';
  os << '|';
  for (i64 h : arm.head.hidden) os << h << ',';
  os << '|' << arm.head.dropout << '|' << arm.head.feature_bn << '|' << arm.head.init_sigma
     << '|';
  const TrainConfig& t = arm.train;
  os << t.lr0 << '|' << t.momentum << '|' << t.weight_decay << '|' << t.images_per_batch << '|'
     << t.pixels_per_image << '|' << strategy_name(t.strategy) << '|' << t.rho << '|'
     << t.iterations << '|' << t.resize_half_prob << '|';
  for (double s : t.eval_scales) os << s << ',';
  for (const auto& [it, m] : t.schedule) os << it << ':' << m << ',';
  os << '|' << seed;
  const std::string text = os.str();
  u64 h = Rng::hash_name(text);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

AblationRow run_one(const std::string& name, const AblationArm& arm, u64 seed) {
  AblationRow row;
  row.ablation = name;
  row.arm = arm.label;
  row.seed = seed;
  row.config_hash = arm_config_hash(arm, seed);
  try {
    SyntheticDataset tr =
        generate_dataset(arm.task, arm.data_seed, arm.n_train, arm.image_size, arm.classes);
    SyntheticDataset he = generate_dataset(arm.task, arm.data_seed + 1, arm.n_heldout,
                                           arm.image_size, arm.classes);
    Model model = build_model(arm.task, arm.classes, arm.backbone, arm.head, seed,
                              arm.train.mode);
    TrainConfig cfg = arm.train;
    cfg.seed = seed;
    TrainResult res = train(model, tr, &he, cfg);
    if (res.aborted) {
      row.status = cat("failed: ", res.abort_reason);
      return row;
    }
    double tail = 0;
    i64 cnt = 0;
    const size_t from = res.log.size() - std::max<size_t>(1, res.log.size() / 10);
    for (size_t i = from; i < res.log.size(); ++i) {
      tail += res.log[i].loss;
      ++cnt;
    }
    row.final_loss = tail / double(cnt);
    row.metrics = res.final_metrics;
    row.primary = primary_metric(arm.task, res.final_metrics);
    for (const auto& lr : res.log) row.loss_curve.emplace_back(lr.iteration, lr.loss);
  } catch (const std::exception& e) {
    row.status = cat("failed: ", e.what());
  }
  return row;
}

std::string metrics_blob(const std::map<std::string, double>& m) {
  std::string out;
  for (const auto& [k, v] : m) {
    if (!out.empty()) out += ';';
    out += k + "=" + format_double(v);
  }
  return out;
}

std::map<std::string, double> parse_metrics_blob(const std::string& blob) {
  std::map<std::string, double> out;
  std::istringstream is(blob);
  std::string part;
  while (std::getline(is, part, ';')) {
    const auto eq = part.find('=');
    if (eq != std::string::npos) out[part.substr(0, eq)] = std::stod(part.substr(eq + 1));
  }
  return out;
}

std::vector<AblationRow> load_cache(const std::string& name, const fs::path& file) {
  std::vector<AblationRow> rows;
  std::ifstream f(file);
  if (!f.good()) return rows;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8 || cells[0] != name) continue;
    AblationRow r;
    r.ablation = cells[0];
    r.arm = cells[1];
    r.seed = std::stoull(cells[2]);
    r.config_hash = cells[3];
    r.status = cells[4];
    r.final_loss = std::stod(cells[5]);
    r.primary = std::stod(cells[6]);
    r.metrics = parse_metrics_blob(cells[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_rows(const std::string& /*name*/, const fs::path& file,
                const std::vector<AblationRow>& rows) {
  std::ofstream f(file);
  f << "ablation,arm,seed,config_hash,status,final_loss,primary_metric,metrics\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (char& c : status)
      if (c == ',') c = ';';
    f << r.ablation << ',' << r.arm << ',' << r.seed << ',' << r.config_hash << ',' << status
      << ',' << format_double(r.final_loss) << ',' << format_double(r.primary) << ','
      << metrics_blob(r.metrics) << '\n';
  }
}

}  // namespace

AblationOutcome run_grid(const std::string& name, const std::vector<AblationArm>& arms,
                         const std::string& out_dir, i64 seeds, i64 threads) {
  PXL_CHECK(seeds >= 1, ConfigError, "need at least one seed");
  fs::create_directories(fs::path(out_dir) / "curves");

  AblationOutcome out;
  out.name = name;
  const fs::path results = fs::path(out_dir) / "results.csv";
  std::vector<AblationRow> cached = load_cache(name, results);

  struct Job {
    const AblationArm* arm;
    u64 seed;
  };
  std::vector<Job> jobs;
  for (const auto& arm : arms) {
    for (i64 s = 1; s <= seeds; ++s) {
      const std::string hash = arm_config_hash(arm, u64(s));
      const auto hit = std::find_if(cached.begin(), cached.end(), [&](const AblationRow& r) {
        return r.config_hash == hash && r.status == "ok";
      });
      if (hit != cached.end()) {
        out.rows.push_back(*hit);
      } else {
        jobs.push_back({&arm, u64(s)});
      }
    }
  }

  std::mutex mu;
  std::atomic<size_t> next{0};
  i64 workers = threads > 0 ? threads : i64(std::thread::hardware_concurrency());
  workers = std::max<i64>(1, std::min<i64>(workers, i64(jobs.size())));
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      AblationRow row = run_one(name, *jobs[i].arm, jobs[i].seed);
      std::lock_guard<std::mutex> lock(mu);
      out.rows.push_back(std::move(row));
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (i64 w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // stable order: arm declaration order, then seed
  std::sort(out.rows.begin(), out.rows.end(), [&](const AblationRow& a, const AblationRow& b) {
    auto arm_index = [&](const std::string& label) {
      for (size_t i = 0; i < arms.size(); ++i)
        if (arms[i].label == label) return i;
      return arms.size();
    };
    const size_t ia = arm_index(a.arm), ib = arm_index(b.arm);
    return ia != ib ? ia < ib : a.seed < b.seed;
  });

  write_rows(name, results, out.rows);

  // per-run loss curves + charts
  std::vector<ChartSeries> loss_chart;
  for (const auto& r : out.rows) {
    if (r.loss_curve.empty()) continue;
    std::ofstream cf(fs::path(out_dir) / "curves" / (r.config_hash + ".csv"));
    cf << "iteration,loss\n";
    for (const auto& [it, loss] : r.loss_curve)
      cf << it << ',' << format_double(loss) << '\n';
    if (r.seed == 1) {  // one representative curve per arm
      ChartSeries s;
      s.label = r.arm;
      for (const auto& [it, loss] : r.loss_curve) s.points.emplace_back(double(it), loss);
      loss_chart.push_back(std::move(s));
    }
  }
  if (!loss_chart.empty())
    write_line_chart((fs::path(out_dir) / (name + "_loss.svg")).string(),
                     name + ": training loss", "iteration", "loss", loss_chart);

  // summary: medians per arm
  std::ofstream sf(fs::path(out_dir) / "summary.csv");
  sf << "ablation,arm,runs,median_primary,median_final_loss\n";
  ChartSeries med;
  med.label = "median";
  double x = 0;
  for (const auto& arm : arms) {
    const auto vals = out.rows;
    i64 n_ok = 0;
    for (const auto& r : out.rows)
      if (r.arm == arm.label && r.status == "ok") ++n_ok;
    if (n_ok == 0) {
      sf << name << ',' << arm.label << ",0,," << '\n';
      continue;
    }
    const double mp = out.arm_median(arm.label, true);
    const double ml = out.arm_median(arm.label, false);
    sf << name << ',' << arm.label << ',' << n_ok << ',' << format_double(mp) << ','
       << format_double(ml) << '\n';
    med.points.emplace_back(x, mp);
    x += 1.0;
  }
  if (med.points.size() > 1)
    write_line_chart((fs::path(out_dir) / (name + "_metric.svg")).string(),
                     name + ": median metric by arm (declaration order)", "arm index",
                     "metric", {med});
  return out;
}

AblationOutcome run_ablation(const std::string& name, const std::string& out_dir, i64 seeds,
                             i64 iterations, i64 threads) {
  return run_grid(name, ablation_arms(name, iterations), out_dir, seeds, threads);
}

}  // namespace pxl
