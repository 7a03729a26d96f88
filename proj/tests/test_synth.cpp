#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pxl/synth.hpp"

using namespace pxl;

TEST_CASE("generators are deterministic and empty datasets are valid") {
  SyntheticDataset a = gen_segmentation(11, 3, 32, 4);
  SyntheticDataset b = gen_segmentation(11, 3, 32, 4);
  REQUIRE(a.count() == 3);
  for (i64 i = 0; i < 3; ++i) {
    CHECK(a.images[size_t(i)].bitwise_equal(b.images[size_t(i)]));
    CHECK(a.targets[size_t(i)].bitwise_equal(b.targets[size_t(i)]));
  }
  SyntheticDataset c = gen_segmentation(12, 3, 32, 4);
  CHECK(!a.images[0].bitwise_equal(c.images[0]));

  SyntheticDataset empty = gen_segmentation(1, 0, 32, 4);
  auto dir = std::filesystem::temp_directory_path() / "pxl_empty_ds";
  save_dataset(empty, dir.string());
  SyntheticDataset back = load_dataset(dir.string());
  CHECK(back.count() == 0);
  CHECK(back.kind == TaskKind::segmentation);

  CHECK_THROWS_AS(gen_segmentation(1, 1, 20, 4), ContractError);  // not a power of 2
  CHECK_THROWS_AS(gen_segmentation(1, 1, 32, 1), ContractError);
}

TEST_CASE("dataset io round trip") {
  SyntheticDataset ds = gen_edges(5, 4, 32);
  auto dir = std::filesystem::temp_directory_path() / "pxl_ds_rt";
  save_dataset(ds, dir.string());
  SyntheticDataset back = load_dataset(dir.string());
  REQUIRE(back.count() == 4);
  CHECK(back.kind == TaskKind::edges);
  CHECK(back.pos_rate == doctest::Approx(ds.pos_rate).epsilon(1e-6));
  for (i64 i = 0; i < 4; ++i) {
    CHECK(back.images[size_t(i)].bitwise_equal(ds.images[size_t(i)]));
    CHECK(back.targets[size_t(i)].bitwise_equal(ds.targets[size_t(i)]));
    CHECK(back.aux[size_t(i)].bitwise_equal(ds.aux[size_t(i)]));
  }
  CHECK_THROWS_AS(load_dataset("/nonexistent/pxl"), CorruptionError);
}

TEST_CASE("segmentation class balance over many images") {
  SyntheticDataset ds = gen_segmentation(1, 500, 32, 4);
  std::vector<i64> hist(4, 0);
  i64 valid = 0;
  for (const Tensor& t : ds.targets) {
    for (i64 i = 0; i < t.numel(); ++i) {
      const int y = int(t.at(i));
      if (y == kIgnoreLabel) continue;
      hist[size_t(y)]++;
      ++valid;
    }
  }
  for (i64 k = 0; k < 4; ++k) {
    const double share = double(hist[size_t(k)]) / double(valid);
    INFO("class ", k, " share ", share);
    CHECK(share >= 0.05);
  }
  // the ignore band exists but stays modest
  i64 total = 500 * 32 * 32;
  CHECK(valid > total * 7 / 10);
  CHECK(valid < total);
}

TEST_CASE("height field analytics") {
  // flat field -> (0,0,1) everywhere
  HeightField flat;
  double n[3];
  double gx, gy;
  flat.gradient(3.0, 4.0, &gx, &gy);
  normal_from_gradient(gx, gy, n);
  CHECK(n[0] == 0.0);
  CHECK(n[1] == 0.0);
  CHECK(n[2] == 1.0);

  // plane z = x -> normal parallel to (-1, 0, 1)/sqrt(2)
  HeightField plane;
  plane.plane_a = 1.0;
  plane.gradient(5.0, 2.0, &gx, &gy);
  normal_from_gradient(gx, gy, n);
  CHECK(n[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(n[1] == 0.0);
  CHECK(n[2] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("normals targets agree with finite differences of the field") {
  double sum_err = 0;
  i64 count = 0;
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng = Rng::stream(u64(seed) + 100, "field-test");
    HeightField f = sample_height_field(rng, 32);
    const double h = 0.5;
    for (i64 r = 1; r < 31; ++r) {
      for (i64 c = 1; c < 31; ++c) {
        const double x = double(c), y = double(r);
        const double fdx = (f.value(x + h, y) - f.value(x - h, y)) / (2 * h);
        const double fdy = (f.value(x, y + h) - f.value(x, y - h)) / (2 * h);
        double na[3], nf[3], gx, gy;
        f.gradient(x, y, &gx, &gy);
        normal_from_gradient(gx, gy, na);
        normal_from_gradient(fdx, fdy, nf);
        double dot = na[0] * nf[0] + na[1] * nf[1] + na[2] * nf[2];
        dot = std::min(1.0, std::max(-1.0, dot));
        sum_err += std::acos(dot) * 180.0 / 3.14159265358979323846;
        ++count;
      }
    }
  }
  CHECK(sum_err / double(count) <= 2.0);
}

TEST_CASE("normals dataset invariants") {
  SyntheticDataset ds = gen_normals(7, 4, 32);
  const i64 hw = 32 * 32;
  for (const Tensor& t : ds.targets) {
    for (i64 p = 0; p < hw; ++p) {
      const double x = t.at(0 * hw + p), y = t.at(1 * hw + p), z = t.at(2 * hw + p);
      CHECK(std::fabs(std::sqrt(x * x + y * y + z * z) - 1.0) < 1e-9);
      CHECK(z > 0.0);
    }
  }
}

TEST_CASE("edge labels are the transition set of the underlying regions") {
  // single centered rectangle: exactly its boundary pixels are positive
  Tensor labels({16, 16}, ScalarMode::f64);
  for (i64 r = 5; r <= 10; ++r)
    for (i64 c = 4; c <= 11; ++c) labels.set(r * 16 + c, 1.0);
  Tensor edges = edges_from_labels(labels);
  for (i64 r = 0; r < 16; ++r) {
    for (i64 c = 0; c < 16; ++c) {
      const bool inside = r >= 5 && r <= 10 && c >= 4 && c <= 11;
      const bool boundary = inside && (r == 5 || r == 10 || c == 4 || c == 11);
      CHECK(edges.at(r * 16 + c) == (boundary ? 1.0 : 0.0));
    }
  }

  // constant image has no positives
  Tensor flat({8, 8}, ScalarMode::f64);
  Tensor none = edges_from_labels(flat);
  for (i64 i = 0; i < none.numel(); ++i) CHECK(none.at(i) == 0.0);

  // generated datasets recompute to the same set
  SyntheticDataset ds = gen_edges(9, 6, 32);
  for (i64 i = 0; i < ds.count(); ++i) {
    Tensor redo = edges_from_labels(ds.aux[size_t(i)]);
    CHECK(redo.bitwise_equal(ds.targets[size_t(i)]));
  }
}

TEST_CASE("edge positive rate lands in the skewed band") {
  SyntheticDataset ds = gen_edges(2, 500, 32);
  INFO("measured positive rate ", ds.pos_rate);
  CHECK(ds.pos_rate >= 0.02);
  CHECK(ds.pos_rate <= 0.08);
}
