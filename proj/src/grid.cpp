#include "voxshape/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxshape/error.hpp"

namespace voxshape {

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw ArgumentError("grid dims must be >= 1 on every axis");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw ArgumentError("grid spacing must be positive and finite on every axis");
    if (!std::isfinite(origin[a])) throw ArgumentError("grid origin must be finite");
  }
}

Geometry Geometry::centered(const Index3& dims, const Vec3& spacing) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  for (int a = 0; a < 3; ++a)
    g.origin[a] = -0.5 * static_cast<double>(dims[a] - 1) * spacing[a];
  g.validate();
  return g;
}

bool Geometry::compatible(const Geometry& other) const noexcept {
  if (dims != other.dims) return false;
  for (int a = 0; a < 3; ++a)
    if (std::abs(spacing[a] - other.spacing[a]) > 1e-9) return false;
  return true;
}

VoxelGrid::VoxelGrid(const Geometry& geometry, double fill) : geometry_(geometry) {
  geometry_.validate();
  data_.assign(geometry_.voxel_count(), fill);
}

VoxelGrid::VoxelGrid(const Geometry& geometry, std::vector<double> data)
    : geometry_(geometry), data_(std::move(data)) {
  geometry_.validate();
  if (data_.size() != geometry_.voxel_count())
    throw ArgumentError("voxel data length " + std::to_string(data_.size()) +
                        " does not match dims product " +
                        std::to_string(geometry_.voxel_count()));
}

bool VoxelGrid::is_binary() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

std::size_t VoxelGrid::count_foreground() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](double v) { return v >= 0.5; }));
}

double VoxelGrid::sum() const noexcept {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

VoxelGrid VoxelGrid::binarized(double threshold) const {
  VoxelGrid out(geometry_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] >= threshold ? 1.0 : 0.0;
  return out;
}

void require_compatible(const VoxelGrid& a, const VoxelGrid& b, const char* op) {
  if (!a.geometry().compatible(b.geometry())) {
    const auto& da = a.dims();
    const auto& db = b.dims();
    throw ShapeError(std::string(op) + ": grid mismatch (" + std::to_string(da[0]) + "x" +
                     std::to_string(da[1]) + "x" + std::to_string(da[2]) + " vs " +
                     std::to_string(db[0]) + "x" + std::to_string(db[1]) + "x" +
                     std::to_string(db[2]) + " or differing spacing)");
  }
}

namespace {

template <typename Op>
VoxelGrid combine(const VoxelGrid& a, const VoxelGrid& b, const char* name, Op op) {
  require_compatible(a, b, name);
  VoxelGrid out(a.geometry());
  auto da = a.data();
  auto db = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = op(da[i], db[i]);
  return out;
}

}  // namespace

VoxelGrid volume_subtract(const VoxelGrid& a, const VoxelGrid& b) {
  return combine(a, b, "volume_subtract", [](double x, double y) { return std::max(x - y, 0.0); });
}

VoxelGrid volume_add(const VoxelGrid& a, const VoxelGrid& b) {
  return combine(a, b, "volume_add", [](double x, double y) { return std::min(x + y, 1.0); });
}

VoxelGrid volume_intersect(const VoxelGrid& a, const VoxelGrid& b) {
  return combine(a, b, "volume_intersect", [](double x, double y) { return std::min(x, y); });
}

VoxelGrid surface_mask(const VoxelGrid& grid) {
  const auto& d = grid.dims();
  VoxelGrid out(grid.geometry());
  auto fg = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return grid.value_or_zero(i, j, k) >= 0.5;
  };
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        if (!fg(i, j, k)) continue;
        if (!fg(i - 1, j, k) || !fg(i + 1, j, k) || !fg(i, j - 1, k) || !fg(i, j + 1, k) ||
            !fg(i, j, k - 1) || !fg(i, j, k + 1))
          out.at(i, j, k) = 1.0;
      }
  return out;
}

std::vector<std::size_t> foreground_indices(const VoxelGrid& grid) {
  std::vector<std::size_t> out;
  auto values = grid.data();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] >= 0.5) out.push_back(i);
  return out;
}

}  // namespace voxshape
