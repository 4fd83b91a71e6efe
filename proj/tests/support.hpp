// support.hpp - small grids, seeded random masks and scratch directories.
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "voxshape/grid.hpp"
#include "voxshape/phantom.hpp"

namespace vs_test {

using namespace voxshape;

inline Geometry cube_geometry(std::int64_t n, Vec3 spacing = {1.0, 1.0, 1.0}) {
  return Geometry{{n, n, n}, spacing, {0.0, 0.0, 0.0}};
}

// Axis-aligned box [lo, hi] (inclusive voxel indices) set to one.
inline VoxelGrid box(const Geometry& g, Index3 lo, Index3 hi) {
  VoxelGrid out(g);
  for (auto k = lo[2]; k <= hi[2]; ++k)
    for (auto j = lo[1]; j <= hi[1]; ++j)
      for (auto i = lo[0]; i <= hi[0]; ++i)
        if (g.contains(i, j, k)) out.at(i, j, k) = 1.0;
  return out;
}

inline VoxelGrid random_mask(const Geometry& g, std::mt19937_64& rng, double density) {
  std::bernoulli_distribution on(density);
  VoxelGrid out(g);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = on(rng) ? 1.0 : 0.0;
  return out;
}

// A smaller phantom so unit tests stay quick.
inline PhantomSpec small_phantom(std::uint64_t seed = 0) {
  PhantomSpec s;
  s.dims = {40, 40, 40};
  s.radii = {13.0, 11.0, 9.0};
  s.thickness = 3.0;
  s.seed = seed;
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("voxshape-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace vs_test
