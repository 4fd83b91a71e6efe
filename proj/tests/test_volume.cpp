#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>

#include "support.hpp"
#include "voxshape/error.hpp"
#include "voxshape/grid.hpp"
#include "voxshape/nrrd.hpp"
#include "voxshape/phantom.hpp"
#include "voxshape/postprocess.hpp"
#include "voxshape/ssm.hpp"

using namespace voxshape;
using vs_test::box;
using vs_test::cube_geometry;

namespace {

std::string raw_nrrd(const std::string& extra_header, const std::string& payload) {
  return "NRRD0004\n" + extra_header + "\n" + payload;
}

}  // namespace

TEST_SUITE("volume") {
  TEST_CASE("subtract and add follow the worked examples") {
    const auto g = cube_geometry(2);
    const VoxelGrid full(g, 1.0);
    const VoxelGrid corner = box(g, {0, 0, 0}, {0, 0, 0});
    CHECK(volume_subtract(full, full).count_foreground() == 0);
    CHECK(volume_subtract(full, corner).count_foreground() == 7);

    const VoxelGrid other = box(g, {1, 1, 1}, {1, 1, 1});
    const auto diff = volume_subtract(corner, other);
    for (double v : diff.data()) CHECK(v >= 0.0);
    CHECK(diff == corner);

    CHECK(volume_add(corner, other).count_foreground() == 2);
    CHECK(volume_add(corner, corner) == corner);
  }

  TEST_CASE("incompatible grids are rejected") {
    const VoxelGrid a(cube_geometry(2)), b(cube_geometry(3));
    CHECK_THROWS_AS(volume_subtract(a, b), ShapeError);
    CHECK_THROWS_AS(volume_add(a, b), ShapeError);
    const VoxelGrid c(cube_geometry(2, {1.0, 1.0, 2.0}));
    CHECK_THROWS_AS(volume_intersect(a, c), ShapeError);
  }

  TEST_CASE("set identities hold exhaustively on small grids") {
    // Every pair of masks on a 2x1x1 lattice, then seeded pairs up to 4^3.
    const Geometry tiny{{2, 1, 1}, {1, 1, 1}, {0, 0, 0}};
    for (int ma = 0; ma < 4; ++ma)
      for (int mb = 0; mb < 4; ++mb) {
        VoxelGrid a(tiny), b(tiny);
        for (int v = 0; v < 2; ++v) {
          a[v] = (ma >> v) & 1;
          b[v] = (mb >> v) & 1;
        }
        CHECK(volume_add(volume_subtract(a, b), volume_intersect(a, b)) == a);
        CHECK(volume_intersect(volume_subtract(a, b), b).count_foreground() == 0);
      }

    std::mt19937_64 rng(11);
    for (int n = 1; n <= 4; ++n)
      for (int trial = 0; trial < 50; ++trial) {
        const auto g = cube_geometry(n);
        const auto a = vs_test::random_mask(g, rng, 0.5), b = vs_test::random_mask(g, rng, 0.5);
        CHECK(volume_add(volume_subtract(a, b), volume_intersect(a, b)) == a);
        const auto u = volume_add(a, b);
        for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == std::max(a[i], b[i]));
        // Restoring a subset: (x \ y) + y == x when y is inside x.
        const auto y = volume_intersect(a, b);
        CHECK(volume_add(volume_subtract(a, y), y) == a);
      }
  }

  TEST_CASE("surface mask treats the outside of the lattice as background") {
    const auto g = cube_geometry(3);
    const VoxelGrid full(g, 1.0);
    const auto s = surface_mask(full);
    CHECK(s.count_foreground() == 26);
    CHECK(s.at(1, 1, 1) == 0.0);
  }
}

TEST_SUITE("nrrd") {
  TEST_CASE("reads a raw uint8 volume of ones") {
    const std::string bytes =
        raw_nrrd("type: uint8\ndimension: 3\nsizes: 2 2 2\nencoding: raw\n", std::string(8, '\x01'));
    const auto g = parse_nrrd(bytes);
    CHECK(g.count_foreground() == 8);
    CHECK(g.spacing() == Vec3{1.0, 1.0, 1.0});
    CHECK(g.origin() == Vec3{0.0, 0.0, 0.0});
  }

  TEST_CASE("space directions set the spacing and space origin the origin") {
    const std::string bytes = raw_nrrd(
        "type: uint8\ndimension: 3\nspace: left-posterior-superior\nsizes: 2 2 2\n"
        "space directions: (0.5,0,0) (0,0.5,0) (0,0,2)\nspace origin: (1,-2,3.5)\nendian: little\nencoding: raw\n",
        std::string(8, '\x00'));
    const auto g = parse_nrrd(bytes);
    CHECK(g.spacing()[0] == doctest::Approx(0.5));
    CHECK(g.spacing()[1] == doctest::Approx(0.5));
    CHECK(g.spacing()[2] == doctest::Approx(2.0));
    CHECK(g.origin() == Vec3{1.0, -2.0, 3.5});
  }

  TEST_CASE("rejects unsupported headers loudly") {
    const std::string four_d = raw_nrrd("type: uint8\ndimension: 4\nsizes: 1 2 2 2\nencoding: raw\n", std::string(8, '\0'));
    try {
      parse_nrrd(four_d);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("unsupported dimension") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_nrrd(raw_nrrd("type: uint8\ndimension: 3\nsizes: 2 2 2\nencoding: bzip2\n", "")),
                    UnsupportedFormatError);
    try {
      parse_nrrd(raw_nrrd("dimension: 3\nsizes: 2 2 2\nencoding: raw\n", std::string(8, '\0')));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("type") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_nrrd("P6\n"), ParseError);
  }

  TEST_CASE("values above one half become foreground when binarizing") {
    std::string payload;
    for (float v : {0.0f, 0.4f, 0.5f, 0.51f, 1.0f, 2.0f, -1.0f, 0.7f}) payload.append(reinterpret_cast<const char*>(&v), 4);
    const auto g = parse_nrrd(raw_nrrd("type: float\ndimension: 3\nsizes: 2 2 2\nendian: little\nencoding: raw\n", payload),
                              NrrdReadOptions{true});
    const std::vector<double> expect{0, 0, 0, 1, 1, 1, 0, 1};
    for (std::size_t i = 0; i < 8; ++i) CHECK(g[i] == expect[i]);
  }

  TEST_CASE("round trips preserve data and geometry") {
    vs_test::ScratchDir dir("nrrd");
    std::mt19937_64 rng(5);

    const auto binary = vs_test::random_mask(cube_geometry(3), rng, 0.4);
    write_nrrd(binary, dir / "b.nrrd");
    CHECK(read_nrrd(dir / "b.nrrd") == binary);

    Geometry aniso{{4, 3, 2}, {1.0, 1.0, 3.0}, {-1.5, 0.25, 7.0}};
    const auto a = vs_test::random_mask(aniso, rng, 0.5);
    write_nrrd(a, dir / "a.nrrd", {NrrdEncoding::gzip});
    const auto back = read_nrrd(dir / "a.nrrd");
    CHECK(back.data().size() == a.data().size());
    CHECK(std::equal(back.data().begin(), back.data().end(), a.data().begin()));
    for (int n = 0; n < 3; ++n) {
      CHECK(std::abs(back.spacing()[n] - a.spacing()[n]) < 1e-9);
      CHECK(std::abs(back.origin()[n] - a.origin()[n]) < 1e-9);
    }

    const auto p = vs_test::small_phantom(1);
    auto q = vs_test::small_phantom(2);
    const auto mean = mean_shape({make_phantom(p), make_phantom(q)});
    write_nrrd(mean, dir / "m.nrrd");
    const auto mb = read_nrrd(dir / "m.nrrd");
    for (std::size_t i = 0; i < mean.size(); ++i) CHECK(std::abs(mb[i] - mean[i]) < 1e-9);
  }

  TEST_CASE("writing to an unwritable path is an io error") {
    const VoxelGrid g(cube_geometry(2));
    CHECK_THROWS_AS(write_nrrd(g, "/nonexistent-dir/x/y.nrrd"), IoError);
    CHECK_THROWS_AS(read_nrrd("/nonexistent-dir/y.nrrd"), IoError);
  }
}

TEST_SUITE("phantom") {
  TEST_CASE("unperturbed shells are mirror symmetric") {
    auto spec = vs_test::small_phantom();
    spec.amplitude = 0.0;
    const auto g = make_phantom(spec);
    const auto& d = g.dims();
    CHECK(g.count_foreground() > 0);
    for (std::int64_t k = 0; k < d[2]; ++k)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t i = 0; i < d[0]; ++i) {
          const double v = g.at(i, j, k);
          REQUIRE(v == g.at(d[0] - 1 - i, j, k));
          REQUIRE(v == g.at(i, d[1] - 1 - j, k));
          REQUIRE(v == g.at(i, j, d[2] - 1 - k));
        }
  }

  TEST_CASE("generation is deterministic and seeds vary the shape mildly") {
    const auto a = make_phantom(vs_test::small_phantom(1));
    CHECK(a == make_phantom(vs_test::small_phantom(1)));
    const auto b = make_phantom(vs_test::small_phantom(2));
    CHECK_FALSE(a == b);
    const double va = static_cast<double>(a.count_foreground()), vb = static_cast<double>(b.count_foreground());
    CHECK(std::abs(va - vb) / std::max(va, vb) <= 0.10);
  }

  TEST_CASE("the shell is one connected piece") {
    const auto g = make_phantom(vs_test::small_phantom(3));
    CHECK(connected_components(g, 26).count() == 1);
  }

  TEST_CASE("invalid specs are rejected") {
    auto s = vs_test::small_phantom();
    s.thickness = 9.0;
    CHECK_THROWS_AS(make_phantom(s), SpecError);
    s = vs_test::small_phantom();
    s.amplitude = 0.31;
    CHECK_THROWS_AS(make_phantom(s), SpecError);
    s = vs_test::small_phantom();
    s.spacing = {2.0, 2.0, 2.0};
    s.thickness = 1.5;
    CHECK_THROWS_AS(make_phantom(s), SpecError);
  }

  TEST_CASE("population subjects are reproducible and differ from each other") {
    PopulationSpec pop;
    pop.base = vs_test::small_phantom(4);
    pop.seed = 9;
    const auto s0 = make_subject(pop, 0);
    CHECK(s0.grid == make_subject(pop, 0).grid);
    CHECK_FALSE(s0.grid == make_subject(pop, 1).grid);
    CHECK(s0.pose.scale >= std::exp(-pop.max_log_scale) - 1e-12);
    CHECK(s0.pose.scale <= std::exp(pop.max_log_scale) + 1e-12);
  }
}

TEST_SUITE("defects") {
  TEST_CASE("a sphere on the shell partitions the shape") {
    const auto spec = vs_test::small_phantom(1);
    const auto shell = make_phantom(spec);
    const Vec3 c = phantom_surface_point(spec, {1.0, 0.3, 0.2});
    const auto r = apply_defect(shell, {DefectKind::sphere, {c}, {5.0}});
    CHECK(r.implant.count_foreground() > 0);
    CHECK(volume_add(r.defective, r.implant) == shell);
    CHECK(volume_intersect(r.defective, r.implant).count_foreground() == 0);
  }

  TEST_CASE("boxes and multi defects also partition the shape") {
    const auto spec = vs_test::small_phantom(2);
    const auto shell = make_phantom(spec);
    const Vec3 a = phantom_surface_point(spec, {0.0, 0.0, 1.0});
    const Vec3 b = phantom_surface_point(spec, {0.0, 0.0, -1.0});
    const auto boxed = apply_defect(shell, {DefectKind::box, {a}, {3.5}});
    CHECK(volume_add(boxed.defective, boxed.implant) == shell);
    CHECK(volume_intersect(boxed.defective, boxed.implant).count_foreground() == 0);

    const auto two = apply_defect(shell, {DefectKind::multi, {a, b}, {4.0, 4.0}});
    CHECK(volume_add(two.defective, two.implant) == shell);
    CHECK(connected_components(two.implant, 26).count() == 2);
  }

  TEST_CASE("bad defect specs are rejected") {
    const auto spec = vs_test::small_phantom();
    const auto shell = make_phantom(spec);
    const Vec3 c = phantom_surface_point(spec, {1.0, 0.0, 0.0});
    CHECK_THROWS_AS(apply_defect(shell, {DefectKind::sphere, {c}, {0.0}}), SpecError);
    CHECK_THROWS_AS(apply_defect(shell, {DefectKind::sphere, {{0.0, 0.0, 0.0}}, {2.0}}), SpecError);
    CHECK_THROWS_AS(apply_defect(shell, {DefectKind::multi, {c}, {3.0}}), SpecError);
    CHECK_THROWS_AS(apply_defect(shell, {DefectKind::sphere, {c, c}, {3.0}}), SpecError);
    CHECK_THROWS_AS(defect_kind_from_string("hexagon"), SpecError);
  }

  TEST_CASE("fitted defect sizes hit the requested fraction") {
    PopulationSpec pop;
    pop.base = vs_test::small_phantom(5);
    const auto c = make_defect_case(pop, 3, DefectKind::sphere, 0.2);
    CHECK(std::abs(c.achieved_fraction - 0.2) <= 0.05);
    CHECK(volume_add(c.result.defective, c.result.implant) == c.subject.grid);
  }

  TEST_CASE("generated two-defect cases leave two separate implant pieces") {
    PopulationSpec pop;
    pop.base = vs_test::small_phantom(6);
    for (std::uint64_t index = 0; index < 6; ++index) {
      const auto c = make_defect_case(pop, index, DefectKind::multi, 0.2);
      CAPTURE(index);
      CHECK(connected_components(c.result.implant, 26).count() == 2);
    }
  }

  TEST_CASE("hints give one separated blob per defect, even when regions touch") {
    const auto spec = vs_test::small_phantom(7);
    const auto g = spec.geometry();
    const Vec3 a = phantom_surface_point(spec, {1.0, 0.0, 0.0});
    const Vec3 b = phantom_surface_point(spec, {0.0, 1.0, 0.0});
    const DefectSpec touching{DefectKind::multi, {a, b}, {9.0, 9.0}};
    REQUIRE(connected_components(defect_region(g, touching), 26).count() == 1);
    const auto hint = defect_hint(g, touching, 2.0);
    CHECK(connected_components(hint, 26).count() == 2);
    for (const auto& c : {a, b}) {
      const Vec3 x = g.continuous_index(c);
      CHECK(hint.at(std::lround(x[0]), std::lround(x[1]), std::lround(x[2])) == 1.0);
    }
    // A single region grows by the margin and nothing is cut.
    const DefectSpec one{DefectKind::sphere, {a}, {4.0}};
    const auto grown = defect_hint(g, one, 2.0);
    CHECK(volume_subtract(defect_region(g, one), grown).count_foreground() == 0);
    CHECK(grown == defect_region(g, {DefectKind::sphere, {a}, {6.0}}));
    CHECK_THROWS_AS(defect_hint(g, one, -1.0), SpecError);
  }
}
