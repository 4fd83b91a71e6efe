// grid.hpp - binary/fractional voxel grids and the volume algebra on them.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace voxshape {

using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;

// Placement of a voxel lattice in world (mm) space. Axes are aligned with
// the world axes; voxel (i,j,k) sits at origin + (i,j,k) * spacing.
struct Geometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t voxel_count() const noexcept {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }

  // Throws ArgumentError when dims < 1 or spacing <= 0.
  void validate() const;

  // Lattice centred on the world origin.
  static Geometry centered(const Index3& dims, const Vec3& spacing);

  Vec3 world(const Index3& ijk) const noexcept {
    return {origin[0] + static_cast<double>(ijk[0]) * spacing[0],
            origin[1] + static_cast<double>(ijk[1]) * spacing[1],
            origin[2] + static_cast<double>(ijk[2]) * spacing[2]};
  }

  // Continuous voxel coordinates of a world point.
  Vec3 continuous_index(const Vec3& p) const noexcept {
    return {(p[0] - origin[0]) / spacing[0], (p[1] - origin[1]) / spacing[1],
            (p[2] - origin[2]) / spacing[2]};
  }

  std::size_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
  }

  Index3 unravel(std::size_t idx) const noexcept {
    const auto n = static_cast<std::int64_t>(idx);
    return {n % dims[0], (n / dims[0]) % dims[1], n / (dims[0] * dims[1])};
  }

  bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }

  // Same dims and spacing within 1e-9 (origins may differ).
  bool compatible(const Geometry& other) const noexcept;
  bool operator==(const Geometry&) const = default;
};

// Scalar field over a Geometry, x fastest. Binary masks hold {0,1};
// mean shapes and resampled intermediates hold values in [0,1].
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(const Geometry& geometry, double fill = 0.0);
  VoxelGrid(const Geometry& geometry, std::vector<double> data);

  const Geometry& geometry() const noexcept { return geometry_; }
  const Index3& dims() const noexcept { return geometry_.dims; }
  const Vec3& spacing() const noexcept { return geometry_.spacing; }
  const Vec3& origin() const noexcept { return geometry_.origin; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t idx) const noexcept { return data_[idx]; }
  double& operator[](std::size_t idx) noexcept { return data_[idx]; }

  double at(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return data_[geometry_.linear(i, j, k)];
  }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) noexcept {
    return data_[geometry_.linear(i, j, k)];
  }
  // Zero outside the lattice.
  double value_or_zero(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return geometry_.contains(i, j, k) ? at(i, j, k) : 0.0;
  }

  bool is_binary() const noexcept;
  std::size_t count_foreground() const noexcept;  // voxels with value >= 0.5
  double sum() const noexcept;

  // Copy with value >= threshold -> 1, else 0.
  VoxelGrid binarized(double threshold = 0.5) const;

  bool operator==(const VoxelGrid&) const = default;

 private:
  Geometry geometry_;
  std::vector<double> data_;
};

// Throws ShapeError unless the two grids share dims and spacing.
void require_compatible(const VoxelGrid& a, const VoxelGrid& b, const char* op);

// Per-voxel max(a - b, 0).
VoxelGrid volume_subtract(const VoxelGrid& a, const VoxelGrid& b);
// Per-voxel min(a + b, 1); set union on binary grids.
VoxelGrid volume_add(const VoxelGrid& a, const VoxelGrid& b);
// Per-voxel min(a, b); set intersection on binary grids.
VoxelGrid volume_intersect(const VoxelGrid& a, const VoxelGrid& b);

// Foreground voxels (>= 0.5) with at least one 6-connected background
// neighbour. Voxels outside the lattice count as background.
VoxelGrid surface_mask(const VoxelGrid& grid);

// Linear indices of voxels with value >= 0.5, ascending.
std::vector<std::size_t> foreground_indices(const VoxelGrid& grid);

}  // namespace voxshape
