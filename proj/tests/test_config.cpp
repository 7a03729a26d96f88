#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pxl/config.hpp"

using namespace pxl;

TEST_CASE("defaults alone form a valid runnable config") {
  Config cfg = default_config();
  CHECK(cfg.get("task.kind") == "segmentation");
  CHECK(cfg.geti("task.size") == 32);
  // spec-pinned training constants
  CHECK(cfg.getf("train.momentum") == 0.9);
  CHECK(cfg.getf("train.weight_decay") == 0.0005);
  // the whole default document builds every domain struct
  CHECK_NOTHROW(config_train(cfg));
  CHECK_NOTHROW(config_backbone(cfg));
  CHECK_NOTHROW(config_head(cfg));
  CHECK_NOTHROW(config_bench(cfg));
  CHECK(hypercolumn_dim(config_backbone(cfg)) == 248);
}

TEST_CASE("empty file parses to the full defaults") {
  Config cfg = parse_config("");
  CHECK(cfg == default_config());
  Config cfg2 = parse_config("# only a comment\n\n   \n");
  CHECK(cfg2 == default_config());
}

TEST_CASE("typed parsing and validation") {
  Config cfg = parse_config("train.momentum=0.9\ntrain.weight_decay=0.0005\n");
  CHECK(cfg.getf("train.momentum") == 0.9);
  CHECK(cfg.getf("train.weight_decay") == 0.0005);

  CHECK_THROWS_AS(parse_config("sample.strategy=biased\nsample.rho=1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.momentum=fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("nonsense.key=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.seed=1\ntrain.seed=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("task.kind=detection\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.schedule=100:0.1,50:0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("backbone.stages=banana\n"), ConfigError);

  // the error message carries the location
  try {
    parse_config("train.lr0=0.01\nbogus.key=3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("render/parse round trip is the identity") {
  Config cfg = default_config();
  apply_override(cfg, "train.lr0=0.00125");
  apply_override(cfg, "head.hidden=64,64");
  apply_override(cfg, "train.schedule=100:0.1,200:0.5");
  apply_override(cfg, "backbone.stages=1x8,2x16");
  apply_override(cfg, "eval.scales=0.5,1");
  apply_override(cfg, "task.kind=edges");
  apply_override(cfg, "backbone.batchnorm=false");
  Config back = parse_config(render_config(cfg));
  CHECK(back == cfg);
}

TEST_CASE("override precedence: flag beats file beats default") {
  Config cfg = parse_config("train.iterations=100\n");
  CHECK(cfg.geti("train.iterations") == 100);   // file beats default (2000)
  apply_override(cfg, "train.iterations=7");
  CHECK(cfg.geti("train.iterations") == 7);     // flag beats file
  CHECK(cfg.geti("train.images_per_batch") == 5);  // untouched default
  CHECK_THROWS_AS(apply_override(cfg, "nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "no-equals"), ConfigError);
}

TEST_CASE("domain builders read the document") {
  Config cfg = default_config();
  apply_override(cfg, "backbone.stages=1x4,1x6");
  apply_override(cfg, "backbone.taps=conv1_1,head");
  apply_override(cfg, "backbone.head_channels=8");
  apply_override(cfg, "head.hidden=16");
  apply_override(cfg, "train.mode=verification");
  apply_override(cfg, "train.schedule=10:0.5");
  apply_override(cfg, "sample.strategy=biased");
  apply_override(cfg, "sample.rho=0.25");

  BackboneSpec b = config_backbone(cfg);
  REQUIRE(b.stages.size() == 2);
  CHECK(b.stages[0].num_convs == 1);
  CHECK(b.stages[1].channels == 6);
  CHECK(b.taps == std::vector<std::string>{"conv1_1", "head"});
  CHECK(hypercolumn_dim(b) == 12);

  MlpSpec h = config_head(cfg);
  CHECK(h.hidden == std::vector<i64>{16});

  TrainConfig t = config_train(cfg);
  CHECK(t.mode == ScalarMode::f64);
  CHECK(t.schedule.size() == 1);
  CHECK(t.schedule[0].first == 10);
  CHECK(t.strategy == SampleStrategy::biased);
  CHECK(t.rho == 0.25);

  // schedule "auto" resolves lazily
  Config cfg2 = default_config();
  CHECK(config_train(cfg2).schedule.empty());
  CHECK(lr_at(config_train(cfg2), 0) == cfg2.getf("train.lr0"));
}

TEST_CASE("schema docs cover every key") {
  const auto docs = config_schema_docs();
  CHECK(docs.size() >= 30);
  Config cfg = default_config();
  for (const auto& d : docs) {
    CHECK(cfg.values.count(d.key) == 1);
    CHECK(!d.doc.empty());
  }
}
