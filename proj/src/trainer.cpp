#include "pxl/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "pxl/resize.hpp"

namespace pxl {

void validate(const TrainConfig& cfg) {
  PXL_CHECK(cfg.lr0 > 0, ConfigError, "lr0 must be positive");
  PXL_CHECK(cfg.momentum >= 0 && cfg.momentum < 1, ConfigError, "momentum must be in [0,1)");
  PXL_CHECK(cfg.weight_decay >= 0, ConfigError, "weight_decay must be >= 0");
  PXL_CHECK(cfg.images_per_batch >= 1, ConfigError, "images_per_batch must be >= 1");
  PXL_CHECK(cfg.pixels_per_image >= 1, ConfigError, "pixels_per_image must be >= 1");
  PXL_CHECK(cfg.iterations >= 0, ConfigError, "iterations must be >= 0");
  PXL_CHECK(cfg.rho >= 0 && cfg.rho <= 1, ConfigError, "rho must be in [0,1]");
  PXL_CHECK(cfg.resize_half_prob >= 0 && cfg.resize_half_prob <= 1, ConfigError,
            "resize_half_prob must be in [0,1]");
  PXL_CHECK(!cfg.eval_scales.empty(), ConfigError, "eval_scales must not be empty");
  i64 prev = -1;
  for (const auto& [it, mult] : cfg.schedule) {
    PXL_CHECK(it > prev, ConfigError, "schedule milestones must be strictly increasing");
    PXL_CHECK(mult > 0, ConfigError, "schedule multipliers must be positive");
    prev = it;
  }
}

double lr_at(const TrainConfig& cfg, i64 iteration) {
  return lr_at(cfg.lr0, cfg.schedule.empty() ? default_schedule(cfg.iterations) : cfg.schedule,
               iteration);
}

SyntheticDataset halve_dataset(const SyntheticDataset& ds) {
  SyntheticDataset out;
  out.kind = ds.kind;
  out.size = ds.size / 2;
  out.classes = ds.classes;
  out.seed = ds.seed;
  out.generator = ds.generator + "-half";
  PXL_CHECK(out.size >= 1, ContractError, "cannot halve a size-", ds.size, " dataset");
  for (i64 i = 0; i < ds.count(); ++i) {
    out.images.push_back(resize_bilinear_chw(ds.images[size_t(i)], out.size, out.size));
    switch (ds.kind) {
      case TaskKind::segmentation:
      case TaskKind::normals:
        out.targets.push_back(resize_nearest(ds.targets[size_t(i)], out.size, out.size));
        break;
      case TaskKind::edges: {
        Tensor labels = resize_nearest(ds.aux[size_t(i)], out.size, out.size);
        out.targets.push_back(edges_from_labels(labels));
        out.aux.push_back(std::move(labels));
        break;
      }
    }
  }
  return out;
}

namespace {

std::map<std::string, u64> stream_states(const Rng& sample, const Rng& dropout,
                                         const Rng& jitter) {
  return {{"pixel-sampling", sample.state()},
          {"dropout", dropout.state()},
          {"scale-jitter", jitter.state()}};
}

}  // namespace

TrainResult train(Model& model, const SyntheticDataset& train_ds,
                  const SyntheticDataset* heldout, const TrainConfig& cfg,
                  const std::string& checkpoint_dir, const std::string& resume_from,
                  std::ostream* batch_dump) {
  validate(cfg);
  PXL_CHECK(train_ds.count() > 0, ContractError, "empty training dataset");
  PXL_CHECK(model.mode == cfg.mode, ContractError, "model is ", mode_name(model.mode),
            " but the run wants ", mode_name(cfg.mode));
  PXL_CHECK(model.task == train_ds.kind, ContractError, "model task does not match dataset");

  Rng sample = Rng::stream(cfg.seed, "pixel-sampling");
  Rng dropout = Rng::stream(cfg.seed, "dropout");
  Rng jitter = Rng::stream(cfg.seed, "scale-jitter");
  OptimState state = make_optim_state(model.params);
  i64 start = 0;

  if (!resume_from.empty()) {
    Checkpoint ck = load_checkpoint(resume_from);
    restore_params(model.params, ck.params);
    for (auto& [name, t] : state.velocity) {
      bool found = false;
      for (auto& [n2, t2] : ck.optim.velocity)
        if (n2 == name) {
          PXL_CHECK(t2.shape() == t.shape(), CorruptionError,
                    "checkpoint velocity '", name, "' shape mismatch");
          t = t2;
          found = true;
          break;
        }
      PXL_CHECK(found, CorruptionError, "checkpoint is missing velocity '", name, "'");
    }
    state.iteration = ck.optim.iteration;
    state.epoch = ck.optim.epoch;
    sample.set_state(ck.rng_states.at("pixel-sampling"));
    dropout.set_state(ck.rng_states.at("dropout"));
    jitter.set_state(ck.rng_states.at("scale-jitter"));
    start = state.iteration;
  }

  std::optional<SyntheticDataset> half;
  const bool strict = cfg.mode == ScalarMode::f64;
  TrainResult result;

  for (i64 t = start; t < cfg.iterations; ++t) {
    const double lr = lr_at(cfg, t);
    const SyntheticDataset* view = &train_ds;
    if (cfg.resize_half_prob > 0.0 && jitter.uniform() < cfg.resize_half_prob) {
      if (!half) half = halve_dataset(train_ds);
      view = &*half;
    }

    double loss_val = 0;
    try {
      PixelBatch batch = build_batch(*view, cfg.images_per_batch, cfg.pixels_per_image,
                                     cfg.strategy, cfg.rho, sample);
      if (batch_dump) dump_batch_csv(batch, *batch_dump);
      Graph g(cfg.mode, strict);
      Var input = g.input(make_batch_input(*view, batch.image_ids, cfg.mode));
      ParamBinding binding;
      Var logits = model_logits(g, model, input, batch.pixels, /*train=*/true, dropout, &binding);
      Var loss = task_loss(logits, batch);
      loss_val = loss.val().at(0);
      if (!std::isfinite(loss_val))
        throw NumericError(cat("loss became non-finite at iteration ", t));
      g.backward(loss);
      sgd_step(model.params, binding, g, state, lr, cfg.momentum, cfg.weight_decay, strict);
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;  // the last periodic checkpoint stays on disk for post-mortem
    }
    state.iteration = t + 1;
    state.epoch = (t + 1) * cfg.images_per_batch / train_ds.count();

    TrainLogRow row;
    row.iteration = t;
    row.lr = lr;
    row.loss = loss_val;
    if (heldout && cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0 && t + 1 < cfg.iterations) {
      auto metrics = evaluate(model, *heldout, cfg.eval_scales, cfg.eval_budget);
      row.metrics.assign(metrics.begin(), metrics.end());
    }
    result.log.push_back(row);

    if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (t + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(checkpoint_dir, model.params, state,
                      stream_states(sample, dropout, jitter));
  }

  if (!result.aborted) {
    if (heldout && cfg.iterations > 0) {
      result.final_metrics = evaluate(model, *heldout, cfg.eval_scales, cfg.eval_budget);
      if (!result.log.empty())
        result.log.back().metrics.assign(result.final_metrics.begin(),
                                         result.final_metrics.end());
    }
    if (!checkpoint_dir.empty())
      save_checkpoint(checkpoint_dir, model.params, state,
                      stream_states(sample, dropout, jitter));
  }
  return result;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  PXL_CHECK(ec == std::errc(), Error, "float formatting failed");
  return std::string(buf, p);
}

void write_train_log_csv(const TrainResult& result, std::ostream& os) {
  std::vector<std::string> metric_keys;
  for (const auto& row : result.log)
    for (const auto& [k, v] : row.metrics)
      if (std::find(metric_keys.begin(), metric_keys.end(), k) == metric_keys.end())
        metric_keys.push_back(k);
  os << "iteration,lr,loss";
  for (const auto& k : metric_keys) os << ',' << k;
  os << '\n';
  for (const auto& row : result.log) {
    os << row.iteration << ',' << format_double(row.lr) << ',' << format_double(row.loss);
    for (const auto& k : metric_keys) {
      os << ',';
      for (const auto& [mk, mv] : row.metrics)
        if (mk == k) {
          os << format_double(mv);
          break;
        }
    }
    os << '\n';
  }
}

}  // namespace pxl
