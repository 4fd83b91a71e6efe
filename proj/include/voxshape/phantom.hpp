// phantom.hpp - synthetic skull-like shells and defects for desk-scale tests.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxshape/grid.hpp"
#include "voxshape/transform.hpp"

namespace voxshape {

// Hollow ellipsoid shell with a smooth random radial perturbation.
struct PhantomSpec {
  Index3 dims{64, 64, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 radii{16.0, 14.0, 12.0};  // outer semi-axes, mm
  double thickness = 4.0;        // mm, measured radially
  std::uint64_t seed = 0;
  double amplitude = 0.12;       // perturbation as a fraction of the radius

  // Throws SpecError on invalid or degenerate specs.
  void validate() const;
  // Lattice centred on the world origin.
  Geometry geometry() const { return Geometry::centered(dims, spacing); }
};

VoxelGrid make_phantom(const PhantomSpec& spec);

// Phantom posed in its own lattice: the canonical shell is mapped through
// `pose` (canonical world -> output world) and sampled analytically.
VoxelGrid make_phantom(const PhantomSpec& spec, const SimilarityTransform& pose);

// Mid-shell point of the canonical phantom along `direction`.
Vec3 phantom_surface_point(const PhantomSpec& spec, const Vec3& direction);

enum class DefectKind { sphere, box, multi };

std::string to_string(DefectKind kind);
DefectKind defect_kind_from_string(const std::string& s);

// sphere: sizes are radii. box: sizes are half edge lengths.
// multi: several spheres; needs at least two centers.
struct DefectSpec {
  DefectKind kind = DefectKind::sphere;
  std::vector<Vec3> centers;  // world mm
  std::vector<double> sizes;  // mm

  void validate() const;
};

struct DefectResult {
  VoxelGrid defective;
  VoxelGrid implant;  // ground truth
};

// Binary mask of the union of all defect regions.
VoxelGrid defect_region(const Geometry& geometry, const DefectSpec& spec);

// One blob per defect: each region grown by `margin` mm, voxels assigned to
// the nearest center, and voxels bordering another blob dropped so the blobs
// stay 26-separated. Suited as a defect hint for implant extraction.
VoxelGrid defect_hint(const Geometry& geometry, const DefectSpec& spec, double margin = 2.0);

// Removes the defect region from `grid`. Each region must hit the shape.
DefectResult apply_defect(const VoxelGrid& grid, const DefectSpec& spec);

// Finds a common defect size so that the defect removes about
// target_fraction of the foreground. Bisection on size; returns the size.
double fit_defect_size(const VoxelGrid& grid, DefectKind kind, const std::vector<Vec3>& centers,
                       double target_fraction);

// A family of subjects around a base phantom: per-subject semi-axes are
// jittered multiplicatively and each subject gets a random similarity pose.
struct PopulationSpec {
  PhantomSpec base;
  double radius_jitter = 0.02;       // each semi-axis scaled by 1 + U(-j, j)
  double max_log_scale = 0.1;        // pose scale exp(U(-m, m))
  double max_rotation_deg = 15.0;
  double max_translation = 4.0;      // mm
  std::uint64_t seed = 0;

  void validate() const;
};

struct Subject {
  PhantomSpec spec;
  SimilarityTransform pose;  // canonical -> subject world
  VoxelGrid grid;
};

// Deterministic in (population.seed, index).
Subject make_subject(const PopulationSpec& population, std::uint64_t index);

struct DefectCase {
  Subject subject;
  DefectSpec defect;
  DefectResult result;
  double requested_fraction = 0.0;
  double achieved_fraction = 0.0;  // implant voxels / subject voxels
};

// Defects centred on the mid-shell at random directions, sized so the
// union removes about `fraction` of the subject. Multi uses two centres.
DefectCase make_defect_case(const PopulationSpec& population, std::uint64_t index, DefectKind kind,
                            double fraction);

}  // namespace voxshape
