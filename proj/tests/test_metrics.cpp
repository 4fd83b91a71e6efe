#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "voxshape/error.hpp"
#include "voxshape/metrics.hpp"

using namespace voxshape;

namespace {

VoxelGrid shifted(const VoxelGrid& g, Index3 by) {
  VoxelGrid out(g.geometry());
  const auto& d = g.dims();
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) out.at(i, j, k) = g.value_or_zero(i - by[0], j - by[1], k - by[2]);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("dice examples") {
    const auto g = vs_test::cube_geometry(4);
    const auto a = vs_test::box(g, {0, 0, 0}, {1, 1, 1});
    CHECK(dsc(a, a) == 1.0);
    CHECK(dsc(a, vs_test::box(g, {2, 2, 2}, {3, 3, 3})) == 0.0);
    CHECK(dsc(a, vs_test::box(g, {1, 0, 0}, {2, 1, 1})) == 0.5);
    CHECK(dsc(VoxelGrid(g), VoxelGrid(g)) == 1.0);
    CHECK_THROWS_AS(dsc(a, VoxelGrid(vs_test::cube_geometry(3))), ShapeError);
  }

  TEST_CASE("surface dice examples") {
    const auto g = vs_test::cube_geometry(6);
    const auto a = vs_test::box(g, {1, 1, 1}, {3, 3, 3});
    const auto b = vs_test::box(g, {2, 1, 1}, {4, 3, 3});
    CHECK(bdsc(a, a, 0.0) == 1.0);
    const double zero_tol = bdsc(a, b, 0.0);
    CHECK(zero_tol < 1.0);
    CHECK(std::abs(zero_tol - vs_test::oracle::bdsc(a, b, 0.0)) < 1e-9);
    CHECK(bdsc(a, b, 20.0) == 1.0);
    CHECK(bdsc(VoxelGrid(g), VoxelGrid(g)) == 1.0);
  }

  TEST_CASE("hd95 examples") {
    const auto g = vs_test::cube_geometry(12);
    const auto a = vs_test::box(g, {1, 1, 1}, {4, 4, 4});
    CHECK(hd95(a, a) == 0.0);
    VoxelGrid p(g), q(g);
    p.at(0, 5, 5) = 1.0;
    q.at(10, 5, 5) = 1.0;
    CHECK(hd95(p, q) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK_THROWS_AS(hd95(a, VoxelGrid(g)), UndefinedMetricError);

    const Geometry aniso{{6, 6, 6}, {1.0, 1.0, 3.0}, {0.0, 0.0, 0.0}};
    const auto c = vs_test::box(aniso, {1, 1, 1}, {3, 3, 3});
    const auto d = vs_test::box(aniso, {1, 1, 2}, {3, 3, 4});
    CHECK(std::abs(hd95(c, d) - *vs_test::oracle::hd95(c, d)) < 1e-9);
    CHECK(std::abs(bdsc(c, d, 1.0) - vs_test::oracle::bdsc(c, d, 1.0)) < 1e-9);
  }

  TEST_CASE("percentile interpolates between order statistics") {
    CHECK(percentile({3.0, 1.0, 2.0}, 50.0) == 2.0);
    CHECK(percentile({0.0, 10.0}, 95.0) == doctest::Approx(9.5));
    CHECK(percentile({4.0}, 95.0) == 4.0);
  }

  TEST_CASE("metrics match brute-force oracles on random small grids") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::int64_t> side(1, 5);
    std::uniform_real_distribution<double> density(0.05, 0.9);
    std::uniform_real_distribution<double> spacing(0.5, 2.5);
    std::uniform_real_distribution<double> tol(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
      const Geometry g{{side(rng), side(rng), side(rng)}, {spacing(rng), spacing(rng), spacing(rng)}, {0.0, 0.0, 0.0}};
      const auto a = vs_test::random_mask(g, rng, density(rng));
      const auto b = vs_test::random_mask(g, rng, density(rng));
      const double t = tol(rng);
      CHECK(std::abs(dsc(a, b) - vs_test::oracle::dsc(a, b)) < 1e-9);
      CHECK(std::abs(bdsc(a, b, t) - vs_test::oracle::bdsc(a, b, t)) < 1e-9);
      const auto expected = vs_test::oracle::hd95(a, b);
      if (expected) {
        CHECK(std::abs(hd95(a, b) - *expected) < 1e-9);
      } else {
        CHECK_THROWS_AS(hd95(a, b), UndefinedMetricError);
      }
    }
  }

  TEST_CASE("metrics are symmetric and translation invariant") {
    std::mt19937_64 rng(77);
    const auto g = vs_test::cube_geometry(10, {1.0, 1.5, 2.0});
    for (int trial = 0; trial < 20; ++trial) {
      // Content kept off the border so the shift loses nothing.
      auto a = vs_test::random_mask(g, rng, 0.3);
      auto b = vs_test::random_mask(g, rng, 0.3);
      const auto inner = vs_test::box(g, {2, 2, 2}, {6, 6, 6});
      a = volume_intersect(a, inner);
      b = volume_intersect(b, inner);
      if (a.count_foreground() == 0 || b.count_foreground() == 0) continue;
      CHECK(dsc(a, b) == dsc(b, a));
      CHECK(bdsc(a, b, 1.5) == bdsc(b, a, 1.5));
      CHECK(hd95(a, b) == doctest::Approx(hd95(b, a)).epsilon(1e-12));
      const Index3 by{1, -2, 3};
      const auto sa = shifted(a, by), sb = shifted(b, by);
      CHECK(dsc(sa, sb) == doctest::Approx(dsc(a, b)).epsilon(1e-12));
      CHECK(bdsc(sa, sb, 1.5) == doctest::Approx(bdsc(a, b, 1.5)).epsilon(1e-12));
      CHECK(hd95(sa, sb) == doctest::Approx(hd95(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("case reports and aggregation") {
    const auto g = vs_test::cube_geometry(6);
    const auto a = vs_test::box(g, {1, 1, 1}, {3, 3, 3});
    const auto same = compare_masks(a, a, 1.0, "c1", "implant");
    CHECK(same.dsc == 1.0);
    CHECK(same.bdsc == 1.0);
    REQUIRE(same.hd95);
    CHECK(*same.hd95 == 0.0);

    const auto empty = compare_masks(VoxelGrid(g), a, 1.0, "c2", "implant");
    CHECK(empty.dsc == 0.0);
    CHECK(empty.bdsc == 0.0);
    CHECK_FALSE(empty.hd95);

    auto half = same;
    half.case_id = "c3";
    half.dsc = 0.5;
    const auto rows = aggregate({same, half});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "mean");
    CHECK(rows[0].dsc == 0.75);
    CHECK(rows[1].label == "median");

    const auto repeated = aggregate({same, same, same});
    CHECK(repeated[0].dsc == same.dsc);
    CHECK(repeated[0].bdsc == same.bdsc);

    const auto csv = aggregate_csv({half, same});
    CHECK(csv.rfind("case,dsc,bdsc,hd95,bdsc_tolerance_mm\n", 0) == 0);
    CHECK(csv.find("c1") < csv.find("c3"));
    CHECK(csv.find("mean") != std::string::npos);

    const auto eval = evaluate_case("c4", a, a, &a, &a);
    REQUIRE(eval.skull);
    CHECK(eval.skull->subject == "skull");
    CHECK(report_to_json(eval).find("\"implant\"") != std::string::npos);
  }
}
