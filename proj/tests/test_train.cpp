#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "pxl/trainer.hpp"
#include "testutil.hpp"

using namespace pxl;
using testutil::t64;

namespace {

Model tiny_model(TaskKind kind, i64 classes, ScalarMode mode, u64 seed) {
  BackboneSpec b;
  b.in_channels = 3;
  b.stages = {{1, 4}, {1, 6}};
  b.head_channels = 8;
  b.taps = {"conv1_1", "conv2_1", "head"};
  b.batchnorm = true;
  b.init_sigma = 0.3;
  MlpSpec h;
  h.hidden = {8};
  h.dropout = 0.0;
  h.init_sigma = 0.2;
  return build_model(kind, classes, b, h, seed, mode);
}

TrainConfig tiny_config(i64 iterations, ScalarMode mode, u64 seed) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.mode = mode;
  cfg.seed = seed;
  cfg.images_per_batch = 2;
  cfg.pixels_per_image = 24;
  cfg.lr0 = 0.02;
  cfg.schedule = {{iterations > 2 ? iterations / 2 : 1, 0.1}};
  return cfg;
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "pxl_train" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("sgd update rules") {
  // momentum 0, wd 0: plain descent, exact for a power-of-two rate
  Graph g(ScalarMode::f64);
  Rng rng(1);
  Tensor p0 = Tensor::gaussian({5}, 0, 1, rng, ScalarMode::f64);
  ParamSet ps;
  ps.add("w", p0.clone(), true, true);
  Var w = g.param(ps.at("w"));
  Var loss = ops::sum(ops::mul(w, w));
  g.backward(loss);
  std::vector<double> grad;
  for (i64 i = 0; i < 5; ++i) grad.push_back(g.value(w.id).grad_at(i));
  ParamBinding binding;
  binding.bind("w", w);
  OptimState state = make_optim_state(ps);
  sgd_step(ps, binding, g, state, 0.25, 0.0, 0.0, true);
  for (i64 i = 0; i < 5; ++i)
    CHECK(ps.at("w").at(i) == p0.at(i) - 0.25 * grad[size_t(i)]);

  // zero grads decay the velocity geometrically
  OptimState s2 = make_optim_state(ps);
  s2.velocity_for("w").set(0, 8.0);
  Graph g2(ScalarMode::f64);
  Var w2 = g2.param(ps.at("w"));
  g2.backward(ops::sum(ops::scale(w2, 0.0)));  // loss independent of w -> zero grad
  ParamBinding b2;
  b2.bind("w", w2);
  const double before = ps.at("w").at(0);
  sgd_step(ps, b2, g2, s2, 1.0, 0.5, 0.0, true);
  CHECK(s2.velocity_for("w").at(0) == 4.0);
  CHECK(ps.at("w").at(0) == before - 4.0);

  // hand-iterated recurrence on f(x)=x^2 from x=1, lr=0.1, momentum=0.9:
  // v1=2, x1=0.8; v2=3.4, x2=0.46
  ParamSet ps3;
  ps3.add("x", t64({1}, {1.0}), true, true);
  OptimState s3 = make_optim_state(ps3);
  for (int step = 0; step < 2; ++step) {
    Graph g3(ScalarMode::f64);
    Var x = g3.param(ps3.at("x"));
    g3.backward(ops::sum(ops::mul(x, x)));
    ParamBinding b3;
    b3.bind("x", x);
    sgd_step(ps3, b3, g3, s3, 0.1, 0.9, 0.0, true);
  }
  CHECK(ps3.at("x").at(0) == doctest::Approx(0.46).epsilon(1e-12));
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.iterations = 3000;
  cfg.schedule = {{1000, 0.1}, {2000, 0.1}};
  CHECK(lr_at(cfg, 0) == 1e-3);
  CHECK(lr_at(cfg, 999) == 1e-3);
  CHECK(lr_at(cfg, 1000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(cfg, 2500) == doctest::Approx(1e-5).epsilon(1e-12));

  TrainConfig flat;
  flat.lr0 = 0.5;
  flat.schedule = {};
  flat.iterations = 2;  // too short for the default schedule
  CHECK(lr_at(flat, 100000) == 0.5);

  TrainConfig bad;
  bad.schedule = {{10, 0.1}, {5, 0.1}};
  CHECK_THROWS_AS(validate(bad), ConfigError);

  const auto ds = default_schedule(2000);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].first == 666);
  CHECK(ds[1].first == 1333);
}

TEST_CASE("decay flags cover weights only") {
  Model m = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 5);
  for (const auto& e : m.params.entries()) {
    const bool is_weight = e.name.size() > 2 && e.name.substr(e.name.size() - 2) == ".w";
    CHECK(e.decay == is_weight);
    // frozen: running statistics, and conv biases cancelled by batch norm
    const bool is_running = e.name.find(".bn.r") != std::string::npos ||
                            e.name.find("feat_bn.r") != std::string::npos;
    const bool is_bn_conv_bias = e.name.rfind("backbone.", 0) == 0 &&
                                 e.name.substr(e.name.size() - 2) == ".b";
    CHECK(e.trainable == !(is_running || is_bn_conv_bias));
  }
}

TEST_CASE("zero iterations leave parameters untouched") {
  SyntheticDataset ds = gen_segmentation(3, 4, 16, 3);
  Model m = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 7);
  ParamSet before = m.params;
  TrainConfig cfg = tiny_config(0, ScalarMode::f64, 3);
  TrainResult r = train(m, ds, nullptr, cfg);
  CHECK(r.log.empty());
  CHECK(!r.aborted);
  for (const auto& e : m.params.entries())
    CHECK(e.tensor.bitwise_equal(before.at(e.name)));
}

TEST_CASE("one small step lowers the loss on a fixed batch") {
  for (int seed = 1; seed <= 20; ++seed) {
    SyntheticDataset ds = gen_segmentation(u64(seed), 2, 16, 3);
    Model m = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, u64(seed) * 13);
    Rng srng(u64(seed) + 3);
    PixelBatch batch = build_batch(ds, 2, 16, SampleStrategy::uniform, 0, srng);
    Tensor input = make_batch_input(ds, batch.image_ids, ScalarMode::f64);

    auto loss_on_batch = [&](Model& model) {
      Graph g(ScalarMode::f64);
      Rng drng(9);
      Var logits = model_logits(g, model, g.input(input.clone()), batch.pixels, true, drng);
      return task_loss(logits, batch).val().at(0);
    };

    const double l0 = loss_on_batch(m);
    bool improved = false;
    for (double lr = 1e-3; lr > 1e-10; lr *= 0.125) {
      Model trial = m;  // fresh copy of parameters
      Graph g(ScalarMode::f64);
      Rng drng(9);
      ParamBinding binding;
      Var logits =
          model_logits(g, trial, g.input(input.clone()), batch.pixels, true, drng, &binding);
      Var loss = task_loss(logits, batch);
      g.backward(loss);
      OptimState st = make_optim_state(trial.params);
      sgd_step(trial.params, binding, g, st, lr, 0.0, 0.0, true);
      if (loss_on_batch(trial) < l0) {
        improved = true;
        break;
      }
    }
    CHECK(improved);
  }
}

TEST_CASE("training is deterministic per config and seed") {
  SyntheticDataset ds = gen_segmentation(5, 4, 16, 3);
  SyntheticDataset held = gen_segmentation(6, 2, 16, 3);
  TrainConfig cfg = tiny_config(6, ScalarMode::f64, 21);
  cfg.eval_every = 3;

  Model m1 = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 11);
  TrainResult r1 = train(m1, ds, &held, cfg);
  Model m2 = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 11);
  TrainResult r2 = train(m2, ds, &held, cfg);

  std::ostringstream c1, c2;
  write_train_log_csv(r1, c1);
  write_train_log_csv(r2, c2);
  CHECK(c1.str() == c2.str());
  CHECK(r1.log.size() == 6);
  for (const auto& e : m1.params.entries())
    CHECK(e.tensor.bitwise_equal(m2.params.at(e.name)));
}

TEST_CASE("checkpoint round trip is bitwise and resume replays the run") {
  SyntheticDataset ds = gen_segmentation(9, 4, 16, 3);
  auto dir = temp_dir("roundtrip");

  Model m = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 31);
  OptimState st = make_optim_state(m.params);
  st.iteration = 17;
  save_checkpoint(dir.string(), m.params, st, {{"pixel-sampling", 123}});
  Checkpoint ck = load_checkpoint(dir.string());
  CHECK(ck.optim.iteration == 17);
  CHECK(ck.rng_states.at("pixel-sampling") == 123);
  for (const auto& e : m.params.entries())
    CHECK(ck.params.at(e.name).bitwise_equal(e.tensor));

  // uninterrupted vs checkpoint/resume
  TrainConfig cfg6 = tiny_config(6, ScalarMode::f64, 41);
  Model full = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 77);
  TrainResult rfull = train(full, ds, nullptr, cfg6);

  auto ckdir = temp_dir("resume");
  TrainConfig cfg3 = cfg6;
  cfg3.iterations = 3;
  cfg3.schedule = cfg6.schedule;  // same milestones as the full run
  Model part = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 77);
  train(part, ds, nullptr, cfg3, ckdir.string());
  TrainConfig cfg_resume = cfg6;
  TrainResult rrest = train(part, ds, nullptr, cfg_resume, "", ckdir.string());

  REQUIRE(rrest.log.size() == 3);
  CHECK(rrest.log.back().loss == rfull.log.back().loss);
  for (const auto& e : full.params.entries())
    CHECK(e.tensor.bitwise_equal(part.params.at(e.name)));

  // a missing tensor file is reported by name
  std::filesystem::remove(dir / "params" / "backbone.conv1_1.w.pxt");
  try {
    load_checkpoint(dir.string());
    FAIL("expected CorruptionError");
  } catch (const CorruptionError& e) {
    CHECK(std::string(e.what()).find("backbone.conv1_1.w") != std::string::npos);
  }
}

TEST_CASE("diverging runs abort and keep the last checkpoint") {
  SyntheticDataset ds = gen_segmentation(13, 4, 16, 3);
  Model m = tiny_model(TaskKind::segmentation, 3, ScalarMode::f32, 51);
  TrainConfig cfg = tiny_config(40, ScalarMode::f32, 5);
  cfg.lr0 = 1e8;  // guaranteed blow-up
  cfg.schedule = {};
  cfg.checkpoint_every = 1;
  auto dir = temp_dir("abort");
  TrainResult r = train(m, ds, nullptr, cfg, dir.string());
  CHECK(r.aborted);
  CHECK(!r.abort_reason.empty());
  CHECK(std::filesystem::exists(dir / "manifest.txt"));  // post-mortem state retained
  Checkpoint ck = load_checkpoint(dir.string());
  CHECK(ck.optim.iteration >= 1);
}

TEST_CASE("scale jitter trains on the halved view") {
  SyntheticDataset ds = gen_edges(15, 4, 32);
  SyntheticDataset half = halve_dataset(ds);
  CHECK(half.size == 16);
  CHECK(half.images[0].dim(1) == 16);
  // halved edge maps are the transition set of the halved labels
  for (i64 i = 0; i < half.count(); ++i)
    CHECK(edges_from_labels(half.aux[size_t(i)]).bitwise_equal(half.targets[size_t(i)]));

  Model m = tiny_model(TaskKind::edges, 0, ScalarMode::f64, 61);
  TrainConfig cfg = tiny_config(4, ScalarMode::f64, 71);
  cfg.resize_half_prob = 1.0;  // every batch at half scale
  cfg.pixels_per_image = 16;
  TrainResult r = train(m, ds, nullptr, cfg);
  CHECK(!r.aborted);
  CHECK(r.log.size() == 4);
}

TEST_CASE("batch dump emits one row per sampled pixel") {
  SyntheticDataset ds = gen_segmentation(17, 3, 16, 3);
  Model m = tiny_model(TaskKind::segmentation, 3, ScalarMode::f64, 81);
  TrainConfig cfg = tiny_config(2, ScalarMode::f64, 91);
  std::ostringstream dump;
  train(m, ds, nullptr, cfg, "", "", &dump);
  i64 lines = 0;
  for (char c : dump.str()) lines += c == '\n' ? 1 : 0;
  // 2 iterations x (header + M*N rows)
  CHECK(lines == 2 * (1 + cfg.images_per_batch * cfg.pixels_per_image));
}
