// edt.hpp - exact Euclidean distance transform on anisotropic lattices.
#pragma once

#include <vector>

#include "voxshape/grid.hpp"

namespace voxshape {

// Squared distance (mm^2) from every voxel centre to the nearest feature
// voxel (value >= 0.5). Separable lower-envelope-of-parabolas algorithm
// (Felzenszwalb & Huttenlocher), one pass per axis. Infinity everywhere if
// there are no features.
std::vector<double> squared_distance_transform(const VoxelGrid& features);

}  // namespace voxshape
