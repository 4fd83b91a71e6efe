#include "voxshape/phantom.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "voxshape/error.hpp"

namespace voxshape {
namespace {

constexpr int kPerturbationTerms = 6;

// Smooth bounded function on the unit sphere, |f| <= 1.
class RadialPerturbation {
 public:
  RadialPerturbation(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double total = 0.0;
    for (auto& t : terms_) {
      Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
      t.direction = d.normalized();
      t.frequency = 1.0 + 2.0 * uni(rng);
      t.phase = 2.0 * std::numbers::pi * uni(rng);
      t.weight = 0.5 + uni(rng);
      total += t.weight;
    }
    for (auto& t : terms_) t.weight /= total;
  }

  double operator()(const Eigen::Vector3d& unit) const {
    double f = 0.0;
    for (const auto& t : terms_) f += t.weight * std::cos(t.frequency * unit.dot(t.direction) + t.phase);
    return f;
  }

 private:
  struct Term {
    Eigen::Vector3d direction;
    double frequency = 1.0;
    double phase = 0.0;
    double weight = 1.0;
  };
  std::array<Term, kPerturbationTerms> terms_;
};

class Shell {
 public:
  explicit Shell(const PhantomSpec& spec) : spec_(spec), perturb_(spec.seed) {}

  double outer_radius(const Eigen::Vector3d& unit) const {
    double q = 0.0;
    for (int a = 0; a < 3; ++a) q += (unit[a] / spec_.radii[a]) * (unit[a] / spec_.radii[a]);
    const double ellipsoid = 1.0 / std::sqrt(q);
    if (spec_.amplitude == 0.0) return ellipsoid;
    return ellipsoid * (1.0 + spec_.amplitude * perturb_(unit));
  }

  bool contains(const Eigen::Vector3d& p) const {
    const double r = p.norm();
    if (r == 0.0) return false;
    const double outer = outer_radius(p / r);
    return r <= outer && r >= outer - spec_.thickness;
  }

 private:
  const PhantomSpec& spec_;
  RadialPerturbation perturb_;
};

}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw SpecError("phantom: dims must be >= 1");
    if (!(spacing[a] > 0.0)) throw SpecError("phantom: spacing must be positive");
    if (!(radii[a] > 0.0)) throw SpecError("phantom: radii must be positive");
  }
  const double min_radius = std::min({radii[0], radii[1], radii[2]});
  const double max_spacing = std::max({spacing[0], spacing[1], spacing[2]});
  if (!(thickness < min_radius)) throw SpecError("phantom: thickness must be below the smallest semi-axis");
  if (!(amplitude >= 0.0 && amplitude <= 0.3)) throw SpecError("phantom: amplitude must lie in [0, 0.3]");
  if (thickness < max_spacing)
    throw SpecError("phantom: shell degenerate, thickness is below the voxel spacing");
}

VoxelGrid make_phantom(const PhantomSpec& spec) {
  return make_phantom(spec, SimilarityTransform::identity(spec.geometry()));
}

VoxelGrid make_phantom(const PhantomSpec& spec, const SimilarityTransform& pose) {
  spec.validate();
  const Geometry geom = spec.geometry();
  const Shell shell(spec);
  VoxelGrid out(geom);
  const auto& d = geom.dims;
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        // Coordinates relative to the lattice centre are exactly mirror-symmetric.
        const Eigen::Vector3d q((static_cast<double>(i) - 0.5 * static_cast<double>(d[0] - 1)) * geom.spacing[0],
                                (static_cast<double>(j) - 0.5 * static_cast<double>(d[1] - 1)) * geom.spacing[1],
                                (static_cast<double>(k) - 0.5 * static_cast<double>(d[2] - 1)) * geom.spacing[2]);
        if (shell.contains(pose.apply_inverse(q))) out.at(i, j, k) = 1.0;
      }
  return out;
}

Vec3 phantom_surface_point(const PhantomSpec& spec, const Vec3& direction) {
  spec.validate();
  Eigen::Vector3d u(direction[0], direction[1], direction[2]);
  if (u.norm() == 0.0) throw SpecError("phantom: zero direction");
  u.normalize();
  const Shell shell(spec);
  const Eigen::Vector3d p = u * (shell.outer_radius(u) - 0.5 * spec.thickness);
  return {p.x(), p.y(), p.z()};
}

std::string to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::sphere: return "sphere";
    case DefectKind::box: return "box";
    case DefectKind::multi: return "multi";
  }
  return "sphere";
}

DefectKind defect_kind_from_string(const std::string& s) {
  if (s == "sphere") return DefectKind::sphere;
  if (s == "box") return DefectKind::box;
  if (s == "multi") return DefectKind::multi;
  throw SpecError("unknown defect kind '" + s + "'");
}

void DefectSpec::validate() const {
  if (centers.empty()) throw SpecError("defect: count must be >= 1");
  if (centers.size() != sizes.size()) throw SpecError("defect: centers and sizes differ in length");
  if (kind == DefectKind::multi && centers.size() < 2)
    throw SpecError("defect: multi defects need at least two centers");
}

namespace {

bool in_region(DefectKind kind, const Vec3& p, const Vec3& c, double size) {
  const double dx = p[0] - c[0], dy = p[1] - c[1], dz = p[2] - c[2];
  if (kind == DefectKind::box)
    return std::abs(dx) <= size && std::abs(dy) <= size && std::abs(dz) <= size;
  return dx * dx + dy * dy + dz * dz <= size * size;
}

VoxelGrid single_region(const Geometry& geometry, DefectKind kind, const Vec3& c, double size) {
  VoxelGrid mask(geometry);
  const auto& d = geometry.dims;
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i)
        if (in_region(kind, geometry.world({i, j, k}), c, size)) mask.at(i, j, k) = 1.0;
  return mask;
}

}  // namespace

VoxelGrid defect_region(const Geometry& geometry, const DefectSpec& spec) {
  spec.validate();
  const double min_spacing = std::min({geometry.spacing[0], geometry.spacing[1], geometry.spacing[2]});
  VoxelGrid mask(geometry);
  for (std::size_t n = 0; n < spec.centers.size(); ++n) {
    if (!(spec.sizes[n] >= min_spacing))
      throw SpecError("defect: size " + std::to_string(spec.sizes[n]) + " mm is below one voxel");
    mask = volume_add(mask, single_region(geometry, spec.kind, spec.centers[n], spec.sizes[n]));
  }
  return mask;
}

VoxelGrid defect_hint(const Geometry& geometry, const DefectSpec& spec, double margin) {
  spec.validate();
  if (!(margin >= 0.0)) throw SpecError("defect hint: margin must be >= 0");
  const auto& d = geometry.dims;
  // Label each voxel with the nearest defect whose enlarged region holds it.
  std::vector<std::int32_t> label(geometry.voxel_count(), 0);
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        const Vec3 p = geometry.world({i, j, k});
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < spec.centers.size(); ++n) {
          if (!in_region(spec.kind, p, spec.centers[n], spec.sizes[n] + margin)) continue;
          const auto& c = spec.centers[n];
          const double dist = std::hypot(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
          if (dist < best) {
            best = dist;
            label[geometry.linear(i, j, k)] = static_cast<std::int32_t>(n) + 1;
          }
        }
      }
  // Dropping voxels next to another label keeps the blobs 26-separated.
  VoxelGrid hint(geometry);
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        const std::int32_t own = label[geometry.linear(i, j, k)];
        if (own == 0) continue;
        bool clash = false;
        for (std::int64_t dk = -1; dk <= 1 && !clash; ++dk)
          for (std::int64_t dj = -1; dj <= 1 && !clash; ++dj)
            for (std::int64_t di = -1; di <= 1 && !clash; ++di) {
              if (!geometry.contains(i + di, j + dj, k + dk)) continue;
              const std::int32_t other = label[geometry.linear(i + di, j + dj, k + dk)];
              clash = other != 0 && other != own;
            }
        if (!clash) hint.at(i, j, k) = 1.0;
      }
  return hint;
}

DefectResult apply_defect(const VoxelGrid& grid, const DefectSpec& spec) {
  const VoxelGrid region = defect_region(grid.geometry(), spec);
  for (std::size_t n = 0; n < spec.centers.size(); ++n) {
    const VoxelGrid one = single_region(grid.geometry(), spec.kind, spec.centers[n], spec.sizes[n]);
    if (volume_intersect(one, grid).count_foreground() == 0)
      throw SpecError("defect: region " + std::to_string(n) + " misses the shape entirely");
  }
  return {volume_subtract(grid, region), volume_intersect(grid, region)};
}

double fit_defect_size(const VoxelGrid& grid, DefectKind kind, const std::vector<Vec3>& centers,
                       double target_fraction) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw SpecError("defect: target fraction must lie in (0, 1)");
  const double total = static_cast<double>(grid.count_foreground());
  if (total == 0.0) throw SpecError("defect: shape is empty");
  const auto& g = grid.geometry();
  const double min_spacing = std::min({g.spacing[0], g.spacing[1], g.spacing[2]});
  double lo = min_spacing;
  double hi = 0.0;
  for (int a = 0; a < 3; ++a) hi += std::pow(static_cast<double>(g.dims[a]) * g.spacing[a], 2);
  hi = std::sqrt(hi);

  auto removed = [&](double size) {
    DefectSpec s{kind, centers, std::vector<double>(centers.size(), size)};
    const VoxelGrid region = defect_region(g, s);
    return static_cast<double>(volume_intersect(region, grid).count_foreground()) / total;
  };
  for (int iter = 0; iter < 40 && hi - lo > 1e-3 * min_spacing; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (removed(mid) < target_fraction ? lo : hi) = mid;
  }
  // Pick whichever bracket end lands closer to the target.
  return std::abs(removed(lo) - target_fraction) <= std::abs(removed(hi) - target_fraction) ? lo : hi;
}

void PopulationSpec::validate() const {
  base.validate();
  if (!(radius_jitter >= 0.0 && radius_jitter < 0.5)) throw SpecError("population: radius_jitter must lie in [0, 0.5)");
  if (!(max_log_scale >= 0.0)) throw SpecError("population: max_log_scale must be >= 0");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0))
    throw SpecError("population: max_rotation_deg must lie in [0, 180]");
  if (!(max_translation >= 0.0)) throw SpecError("population: max_translation must be >= 0");
}

namespace {

std::mt19937_64 subject_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector3d v;
  do v = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
  while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace

Subject make_subject(const PopulationSpec& population, std::uint64_t index) {
  population.validate();
  auto rng = subject_rng(population.seed, index, 0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0), unit(0.0, 1.0);
  Subject s;
  s.spec = population.base;
  for (auto& r : s.spec.radii) r *= 1.0 + population.radius_jitter * sym(rng);
  s.spec.validate();
  s.pose = SimilarityTransform::identity(s.spec.geometry());
  s.pose.scale = std::exp(population.max_log_scale * sym(rng));
  const Eigen::Vector3d axis = random_unit(rng);
  const double angle = population.max_rotation_deg * unit(rng) * std::numbers::pi / 180.0;
  s.pose.rotation = SimilarityTransform::axis_angle(axis, angle);
  s.pose.translation = random_unit(rng) * population.max_translation * unit(rng);
  s.grid = make_phantom(s.spec, s.pose);
  return s;
}

DefectCase make_defect_case(const PopulationSpec& population, std::uint64_t index, DefectKind kind,
                            double fraction) {
  DefectCase c;
  c.subject = make_subject(population, index);
  auto rng = subject_rng(population.seed, index, 1);
  const std::size_t count = kind == DefectKind::multi ? 2 : 1;
  std::vector<Vec3> centers;
  Eigen::Vector3d first;
  for (std::size_t n = 0; n < count; ++n) {
    Eigen::Vector3d u = random_unit(rng);
    // The second defect sits 120 to 180 degrees from the first.
    if (n == 1) {
      Eigen::Vector3d side = u - u.dot(first) * first;
      if (side.norm() < 1e-6) side = first.unitOrthogonal();
      const double angle = std::uniform_real_distribution<double>(2.0 * std::numbers::pi / 3.0, std::numbers::pi)(rng);
      u = std::cos(angle) * first + std::sin(angle) * side.normalized();
    }
    if (n == 0) first = u;
    const Vec3 canonical = phantom_surface_point(c.subject.spec, {u.x(), u.y(), u.z()});
    const Eigen::Vector3d p = c.subject.pose.apply(Eigen::Vector3d(canonical[0], canonical[1], canonical[2]));
    centers.push_back({p.x(), p.y(), p.z()});
  }
  const double size = fit_defect_size(c.subject.grid, kind, centers, fraction);
  c.defect = {kind, centers, std::vector<double>(count, size)};
  c.result = apply_defect(c.subject.grid, c.defect);
  c.requested_fraction = fraction;
  c.achieved_fraction = static_cast<double>(c.result.implant.count_foreground()) /
                        static_cast<double>(c.subject.grid.count_foreground());
  return c;
}

}  // namespace voxshape
