#include "voxshape/edt.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace voxshape {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform of samples f at positions i * step.
// Only finite samples spawn parabolas.
void transform_line(const std::vector<double>& f, double step, std::vector<double>& out,
                    std::vector<std::size_t>& vertex, std::vector<double>& boundary) {
  const std::size_t n = f.size();
  auto intersect = [&](std::size_t p, std::size_t q) {
    const double xp = static_cast<double>(p) * step, xq = static_cast<double>(q) * step;
    return ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
  };
  std::ptrdiff_t k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      vertex[0] = q;
      boundary[0] = -kInf;
      boundary[1] = kInf;
      continue;
    }
    double s = intersect(vertex[static_cast<std::size_t>(k)], q);
    while (s <= boundary[static_cast<std::size_t>(k)]) {
      --k;
      s = intersect(vertex[static_cast<std::size_t>(k)], q);
    }
    ++k;
    vertex[static_cast<std::size_t>(k)] = q;
    boundary[static_cast<std::size_t>(k)] = s;
    boundary[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  std::size_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double xq = static_cast<double>(q) * step;
    while (boundary[j + 1] < xq) ++j;
    const double dx = xq - static_cast<double>(vertex[j]) * step;
    out[q] = dx * dx + f[vertex[j]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const VoxelGrid& features) {
  const auto& d = features.dims();
  const auto& sp = features.spacing();
  const auto& g = features.geometry();
  std::vector<double> dist(features.size());
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = features[i] >= 0.5 ? 0.0 : kInf;

  for (int axis = 0; axis < 3; ++axis) {
    const auto n = static_cast<std::size_t>(d[axis]);
    std::vector<double> line(n), out(n), boundary(n + 1);
    std::vector<std::size_t> vertex(n);
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (std::int64_t v = 0; v < d[a2]; ++v)
      for (std::int64_t u = 0; u < d[a1]; ++u) {
        Index3 p{};
        p[a1] = u;
        p[a2] = v;
        for (std::size_t t = 0; t < n; ++t) {
          p[axis] = static_cast<std::int64_t>(t);
          line[t] = dist[g.linear(p[0], p[1], p[2])];
        }
        transform_line(line, sp[axis], out, vertex, boundary);
        for (std::size_t t = 0; t < n; ++t) {
          p[axis] = static_cast<std::int64_t>(t);
          dist[g.linear(p[0], p[1], p[2])] = out[t];
        }
      }
  }
  return dist;
}

}  // namespace voxshape
