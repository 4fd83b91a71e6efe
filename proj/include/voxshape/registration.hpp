// registration.hpp - similarity registration of binary volumes and warping.
#pragma once

#include "voxshape/grid.hpp"
#include "voxshape/transform.hpp"

namespace voxshape {

struct RegistrationConfig {
  double tol = 1e-4;            // relative change of the trimmed residual
  int max_iterations = 100;
  double trim_fraction = 0.8;   // fraction of closest matches kept per ICP step
  std::size_t max_points = 20000;  // surface points used per shape (strided subsample)
  double normal_weight = 2.0;   // mm per unit of normal mismatch in correspondence search
};

struct RegistrationReport {
  SimilarityTransform transform;  // moving world -> fixed world
  double residual = 0.0;          // mean symmetric surface distance after alignment, mm
  int iterations = 0;
  bool converged = false;
};

// Moment-based starts (four principal-axis sign flips plus axis-aligned),
// each run through symmetric trimmed ICP on oriented surface points and
// polished by Levenberg-Marquardt on Gaussian-smoothed images. The start
// with the lowest smoothed-intensity cost wins. Throws DegenerateInputError
// on empty foregrounds.
RegistrationReport estimate_transform(const VoxelGrid& moving, const VoxelGrid& fixed,
                                      const RegistrationConfig& config = {});

enum class WarpMode {
  automatic,  // threshold iff the input is binary
  binary,     // trilinear, then >= 0.5 -> 1
  fractional  // trilinear only
};

// Resamples `moving` onto t.fixed_grid by inverse mapping.
VoxelGrid warp(const VoxelGrid& moving, const SimilarityTransform& t,
               WarpMode mode = WarpMode::automatic);

// Trilinear sample at a continuous voxel index; zero outside the lattice.
double sample_trilinear(const VoxelGrid& grid, const Vec3& continuous_index);

}  // namespace voxshape
