#include "voxshape/registration.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "kdtree.hpp"
#include "voxshape/error.hpp"

namespace voxshape {
namespace {

using Points = std::vector<Eigen::Vector3d>;

Eigen::Vector3d to_eigen(const Vec3& v) { return {v[0], v[1], v[2]}; }

Points world_points(const VoxelGrid& grid, const std::vector<std::size_t>& indices, std::size_t max_points) {
  const std::size_t stride = max_points == 0 ? 1 : std::max<std::size_t>(1, (indices.size() + max_points - 1) / max_points);
  Points out;
  out.reserve(indices.size() / stride + 1);
  for (std::size_t n = 0; n < indices.size(); n += stride)
    out.push_back(to_eigen(grid.geometry().world(grid.geometry().unravel(indices[n]))));
  return out;
}

struct Moments {
  Eigen::Vector3d centroid;
  Eigen::Matrix3d axes;  // columns, ascending variance
  double gyration_radius = 0.0;
};

Moments moments(const Points& pts) {
  Moments m;
  m.centroid.setZero();
  for (const auto& p : pts) m.centroid += p;
  m.centroid /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - m.centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  m.axes = eig.eigenvectors();
  m.gyration_radius = std::sqrt(std::max(cov.trace(), 0.0));
  return m;
}

SimilarityTransform make_transform(double scale, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& moving_centroid,
                                   const Eigen::Vector3d& fixed_centroid, const Geometry& fixed_grid) {
  SimilarityTransform t;
  t.scale = scale;
  t.rotation = rotation;
  t.translation = fixed_centroid - scale * (rotation * moving_centroid);
  t.fixed_grid = fixed_grid;
  return t;
}

// Fraction of transformed moving foreground points landing on fixed foreground.
double overlap_score(const Points& moving_fg, const VoxelGrid& fixed, const SimilarityTransform& t) {
  std::size_t hits = 0;
  const auto& g = fixed.geometry();
  for (const auto& p : moving_fg) {
    const Eigen::Vector3d q = t.apply(p);
    const Vec3 c = g.continuous_index({q.x(), q.y(), q.z()});
    const auto i = static_cast<std::int64_t>(std::lround(c[0]));
    const auto j = static_cast<std::int64_t>(std::lround(c[1]));
    const auto k = static_cast<std::int64_t>(std::lround(c[2]));
    if (fixed.value_or_zero(i, j, k) >= 0.5) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(moving_fg.size());
}

// Separable Gaussian blur with a truncated kernel; sigma in voxels.
VoxelGrid blurred(const VoxelGrid& grid, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int r = -radius; r <= radius; ++r) total += kernel[r + radius] = std::exp(-0.5 * r * r / (sigma * sigma));
  for (auto& w : kernel) w /= total;
  VoxelGrid cur = grid;
  const auto& d = grid.dims();
  for (int axis = 0; axis < 3; ++axis) {
    VoxelGrid next(grid.geometry());
    for (std::int64_t k = 0; k < d[2]; ++k)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t i = 0; i < d[0]; ++i) {
          double v = 0.0;
          for (int r = -radius; r <= radius; ++r) {
            Index3 n{i, j, k};
            n[axis] += r;
            v += kernel[r + radius] * cur.value_or_zero(n[0], n[1], n[2]);
          }
          next.at(i, j, k) = v;
        }
    cur = std::move(next);
  }
  return cur;
}

// Surface samples with outward unit normals. Matching in the joint
// (position, weighted normal) space keeps the inner and outer walls of a
// thin shell from pairing up.
struct Surface {
  Points points;
  Points normals;
};

Surface oriented_surface(const VoxelGrid& grid, std::size_t max_points) {
  const auto indices = foreground_indices(surface_mask(grid));
  const VoxelGrid smooth = blurred(grid, 1.0);
  const auto& g = grid.geometry();
  const auto& sp = g.spacing;
  const std::size_t stride =
      max_points == 0 ? 1 : std::max<std::size_t>(1, (indices.size() + max_points - 1) / max_points);
  Surface out;
  for (std::size_t n = 0; n < indices.size(); n += stride) {
    const Index3 c = g.unravel(indices[n]);
    Eigen::Vector3d grad;
    for (int a = 0; a < 3; ++a) {
      Index3 lo = c, hi = c;
      --lo[a];
      ++hi[a];
      grad[a] = (smooth.value_or_zero(hi[0], hi[1], hi[2]) - smooth.value_or_zero(lo[0], lo[1], lo[2])) / (2.0 * sp[a]);
    }
    const double norm = grad.norm();
    out.points.push_back(to_eigen(g.world(c)));
    out.normals.push_back(norm > 0.0 ? Eigen::Vector3d(-grad / norm) : Eigen::Vector3d::Zero());
  }
  return out;
}

using Point6 = detail::KdTree6::Point;

Point6 joint(const Eigen::Vector3d& p, const Eigen::Vector3d& n, double weight) {
  Point6 x;
  x << p, weight * n;
  return x;
}

std::vector<Point6> joint_points(const Surface& s, const SimilarityTransform& t, double weight) {
  std::vector<Point6> out;
  out.reserve(s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i)
    out.push_back(joint(t.apply(s.points[i]), t.rotation * s.normals[i], weight));
  return out;
}

// Samples a grid and its gradient (per mm) at a world point, trilinearly.
struct Smoothed {
  VoxelGrid image;
  std::array<VoxelGrid, 3> gradient;

  Smoothed(const VoxelGrid& grid, double sigma) : image(blurred(grid, sigma)), gradient{image, image, image} {
    const auto& d = image.dims();
    const auto& sp = image.spacing();
    for (std::int64_t k = 0; k < d[2]; ++k)
      for (std::int64_t j = 0; j < d[1]; ++j)
        for (std::int64_t i = 0; i < d[0]; ++i)
          for (int a = 0; a < 3; ++a) {
            Index3 lo{i, j, k}, hi{i, j, k};
            --lo[a];
            ++hi[a];
            gradient[a].at(i, j, k) = (image.value_or_zero(hi[0], hi[1], hi[2]) -
                                       image.value_or_zero(lo[0], lo[1], lo[2])) / (2.0 * sp[a]);
          }
  }

  double value(const Vec3& c) const { return sample_trilinear(image, c); }
  Eigen::Vector3d grad(const Vec3& c) const {
    return {sample_trilinear(gradient[0], c), sample_trilinear(gradient[1], c), sample_trilinear(gradient[2], c)};
  }
};

// Applies a small update (translation, rotation vector, log scale) acting
// about `pivot` in the fixed frame.
SimilarityTransform update(const SimilarityTransform& t, const Eigen::Matrix<double, 7, 1>& delta,
                           const Eigen::Vector3d& pivot) {
  const Eigen::Vector3d w = delta.segment<3>(3);
  const double angle = w.norm();
  const Eigen::Matrix3d r =
      angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
  const double f = std::exp(delta[6]);
  SimilarityTransform out = t;
  out.scale = t.scale * f;
  out.rotation = r * t.rotation;
  out.translation = f * (r * (t.translation - pivot)) + pivot + delta.head<3>();
  return out;
}

// Levenberg-Marquardt on the Huber-weighted intensity difference between
// the smoothed images, summed over a band of moving voxels.
struct Refined {
  SimilarityTransform transform;
  double cost = 0.0;  // mean Huber loss per band voxel
};

// Robust loss on intensity residuals: Huber, or Tukey's biweight which
// ignores residuals beyond `width` altogether (missing anatomy).
struct Loss {
  enum Kind { huber, tukey } kind = huber;
  double width = 0.25;

  double value(double r) const {
    const double a = std::abs(r);
    if (kind == huber) return a <= width ? 0.5 * r * r : width * (a - 0.5 * width);
    const double c2 = width * width / 6.0;
    if (a >= width) return c2;
    const double u = 1.0 - (r / width) * (r / width);
    return c2 * (1.0 - u * u * u);
  }
  double weight(double r) const {
    const double a = std::abs(r);
    if (kind == huber) return a <= width ? 1.0 : width / a;
    if (a >= width) return 0.0;
    const double u = 1.0 - (r / width) * (r / width);
    return u * u;
  }
};

Refined refine(const Smoothed& moving, const Smoothed& fixed, SimilarityTransform t, const Eigen::Vector3d& pivot,
               int iterations, Loss loss) {
  constexpr double kBand = 1e-3;
  const auto& mg = moving.image.geometry();
  const auto& fg = fixed.image.geometry();
  Points band;
  std::vector<double> target;
  for (std::size_t i = 0; i < moving.image.size(); ++i)
    if (moving.image[i] > kBand) {
      band.push_back(to_eigen(mg.world(mg.unravel(i))));
      target.push_back(moving.image[i]);
    }

  auto cost = [&](const SimilarityTransform& x) {
    double c = 0.0;
    for (std::size_t n = 0; n < band.size(); ++n) {
      const Eigen::Vector3d q = x.apply(band[n]);
      const double r = std::abs(fixed.value(fg.continuous_index({q.x(), q.y(), q.z()})) - target[n]);
      c += loss.value(r);
    }
    return c;
  };
  auto result = [&](double c) { return Refined{t, c / static_cast<double>(std::max<std::size_t>(band.size(), 1))}; };

  double current = cost(t);
  double lambda = 1e-3;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 7, 7> h = Eigen::Matrix<double, 7, 7>::Zero();
    Eigen::Matrix<double, 7, 1> g = Eigen::Matrix<double, 7, 1>::Zero();
    for (std::size_t n = 0; n < band.size(); ++n) {
      const Eigen::Vector3d q = t.apply(band[n]);
      const Vec3 c = fg.continuous_index({q.x(), q.y(), q.z()});
      const double r = fixed.value(c) - target[n];
      const double w = loss.weight(r);
      const Eigen::Vector3d dq = fixed.grad(c);
      const Eigen::Vector3d arm = q - pivot;
      Eigen::Matrix<double, 7, 1> j;
      j << dq, arm.cross(dq), dq.dot(arm);
      h.noalias() += w * j * j.transpose();
      g.noalias() += w * r * j;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      Eigen::Matrix<double, 7, 7> a = h;
      a.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 7, 1> delta = a.ldlt().solve(-g);
      const SimilarityTransform candidate = update(t, delta, pivot);
      const double c = cost(candidate);
      if (c < current) {
        const double gain = (current - c) / std::max(current, 1e-300);
        t = candidate;
        current = c;
        lambda = std::max(lambda * 0.3, 1e-7);
        accepted = true;
        if (gain < 1e-7) return result(current);
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return result(current);
}

struct IcpResult {
  SimilarityTransform transform;
  double trimmed_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Keeps the `keep` smallest entries of `matches`, ordered by index for a
// deterministic accumulation order.
void trim(std::vector<std::pair<double, std::uint32_t>>& matches, std::size_t keep) {
  std::nth_element(matches.begin(), matches.begin() + static_cast<std::ptrdiff_t>(keep - 1), matches.end());
  matches.resize(keep);
  std::sort(matches.begin(), matches.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
}

std::size_t kept(std::size_t n, double fraction) {
  return std::max<std::size_t>(
      3, std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)))));
}

// Symmetric trimmed ICP: pairs come from moving->fixed and fixed->moving
// nearest neighbours, so neither shape can collapse into the other.
IcpResult run_icp(const Surface& source, const Surface& target_surface, const detail::KdTree6& target,
                  SimilarityTransform t, const RegistrationConfig& config) {
  IcpResult result;
  const std::size_t ns = source.points.size(), nt = target_surface.points.size();
  const std::size_t keep_s = kept(ns, config.trim_fraction), keep_t = kept(nt, config.trim_fraction);
  std::vector<std::pair<double, std::uint32_t>> forward, backward;
  std::vector<std::uint32_t> partner_s(ns), partner_t(nt);
  double previous = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= config.max_iterations; ++it) {
    const detail::KdTree6 moved(joint_points(source, t, config.normal_weight));
    forward.resize(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      const auto hit = target.nearest(moved.points()[s]);
      forward[s] = {hit.squared_distance, static_cast<std::uint32_t>(s)};
      partner_s[s] = hit.index;
    }
    backward.resize(nt);
    for (std::size_t q = 0; q < nt; ++q) {
      const auto hit = moved.nearest(target.points()[q]);
      backward[q] = {hit.squared_distance, static_cast<std::uint32_t>(q)};
      partner_t[q] = hit.index;
    }
    trim(forward, keep_s);
    trim(backward, keep_t);

    const auto cols = static_cast<Eigen::Index>(keep_s + keep_t);
    Eigen::Matrix3Xd src(3, cols), dst(3, cols);
    double residual = 0.0;
    Eigen::Index c = 0;
    for (const auto& [d2, s] : forward) {
      residual += std::sqrt(d2);
      src.col(c) = source.points[s];
      dst.col(c++) = target_surface.points[partner_s[s]];
    }
    for (const auto& [d2, q] : backward) {
      residual += std::sqrt(d2);
      src.col(c) = source.points[partner_t[q]];
      dst.col(c++) = target_surface.points[q];
    }
    residual /= static_cast<double>(cols);

    result.iterations = it;
    result.trimmed_residual = residual;
    const double change = std::abs(previous - residual) / std::max(residual, 1e-12);
    if (std::isfinite(previous) && change < config.tol) {
      result.converged = true;
      break;
    }
    previous = residual;

    const Eigen::Matrix4d h = Eigen::umeyama(src, dst, true);
    const Eigen::Matrix3d sr = h.topLeftCorner<3, 3>();
    const double scale = std::cbrt(sr.determinant());
    if (!(scale > 0.0) || !std::isfinite(scale)) break;
    t.scale = scale;
    t.rotation = sr / scale;
    t.translation = h.topRightCorner<3, 1>();
  }
  result.transform = t;
  return result;
}

double mean_distance(const Points& from, const detail::KdTree3& to) {
  double sum = 0.0;
  for (const auto& p : from) sum += std::sqrt(to.nearest(p).squared_distance);
  return sum / static_cast<double>(from.size());
}

}  // namespace

RegistrationReport estimate_transform(const VoxelGrid& moving, const VoxelGrid& fixed,
                                      const RegistrationConfig& config) {
  if (config.max_iterations < 1) throw ArgumentError("registration: max_iterations must be >= 1");
  if (!(config.trim_fraction > 0.0 && config.trim_fraction <= 1.0))
    throw ArgumentError("registration: trim_fraction must lie in (0, 1]");
  if (!(config.normal_weight >= 0.0)) throw ArgumentError("registration: normal_weight must be >= 0");

  const auto moving_fg_idx = foreground_indices(moving);
  const auto fixed_fg_idx = foreground_indices(fixed);
  if (moving_fg_idx.empty()) throw DegenerateInputError("registration: moving image has an empty foreground");
  if (fixed_fg_idx.empty()) throw DegenerateInputError("registration: fixed image has an empty foreground");

  const Points moving_fg = world_points(moving, moving_fg_idx, 0);
  const Points fixed_fg = world_points(fixed, fixed_fg_idx, 0);
  const Moments mm = moments(moving_fg);
  const Moments mf = moments(fixed_fg);
  const double scale0 = mm.gyration_radius > 0.0 && mf.gyration_radius > 0.0
                            ? mf.gyration_radius / mm.gyration_radius
                            : 1.0;

  // Principal axes fix the rotation up to the four proper sign flips.
  const Points probe = world_points(moving, moving_fg_idx, config.max_points);
  std::vector<std::pair<double, SimilarityTransform>> starts;
  for (int flip = 0; flip < 4; ++flip) {
    Eigen::Vector3d signs(flip & 1 ? -1.0 : 1.0, flip & 2 ? -1.0 : 1.0, 1.0);
    Eigen::Matrix3d r = mf.axes * signs.asDiagonal() * mm.axes.transpose();
    if (r.determinant() < 0.0) {
      signs.z() = -1.0;
      r = mf.axes * signs.asDiagonal() * mm.axes.transpose();
    }
    const auto t = make_transform(scale0, r, mm.centroid, mf.centroid, fixed.geometry());
    starts.emplace_back(overlap_score(probe, fixed, t), t);
  }
  std::stable_sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  // Axis-aligned start: principal axes are unreliable on near-spherical or
  // heavily defective shapes.
  starts.emplace_back(0.0, make_transform(scale0, Eigen::Matrix3d::Identity(), mm.centroid, mf.centroid,
                                          fixed.geometry()));

  const Surface source = oriented_surface(moving, config.max_points);
  const Surface target_surface = oriented_surface(fixed, config.max_points);
  const detail::KdTree6 target(joint_points(target_surface, SimilarityTransform::identity(fixed.geometry()),
                                            config.normal_weight));

  // Every ICP result is polished on the smoothed images; the smoothed
  // intensity cost also ranks the candidates, separating orientations far
  // better than surface distances on a thin shell.
  RegistrationReport report;
  double best = std::numeric_limits<double>::infinity();
  const Smoothed moving_coarse(moving, 2.0), fixed_coarse(fixed, 2.0);
  const Smoothed moving_fine(moving, 1.0), fixed_fine(fixed, 1.0);
  for (const auto& start : starts) {
    const IcpResult fit = run_icp(source, target_surface, target, start.second, config);
    // Huber stages pull the pose in from coarse to fine; the shrinking
    // Tukey widths then discount anatomy missing from either image.
    Refined fine = refine(moving_coarse, fixed_coarse, fit.transform, mf.centroid, 30, {Loss::huber, 0.25});
    fine = refine(moving_fine, fixed_fine, fine.transform, mf.centroid, 30, {Loss::huber, 0.25});
    for (double width : {0.3, 0.15, 0.1})
      fine = refine(moving_fine, fixed_fine, fine.transform, mf.centroid, 60, {Loss::tukey, width});
    if (fine.cost < best) {
      best = fine.cost;
      report.transform = fine.transform;
      report.iterations = fit.iterations;
      report.converged = fit.converged;
    }
  }

  const detail::KdTree3 target_tree(target_surface.points);
  Points moved;
  for (const auto& p : source.points) moved.push_back(report.transform.apply(p));
  const detail::KdTree3 moved_tree(moved);
  report.residual = 0.5 * (mean_distance(moved, target_tree) + mean_distance(target_surface.points, moved_tree));
  return report;
}

double sample_trilinear(const VoxelGrid& grid, const Vec3& c) {
  const auto& d = grid.dims();
  const double fx = std::floor(c[0]), fy = std::floor(c[1]), fz = std::floor(c[2]);
  if (fx < -1.0 || fy < -1.0 || fz < -1.0 || fx > static_cast<double>(d[0]) ||
      fy > static_cast<double>(d[1]) || fz > static_cast<double>(d[2]))
    return 0.0;
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const auto k = static_cast<std::int64_t>(fz);
  const double ax = c[0] - fx, ay = c[1] - fy, az = c[2] - fz;
  double v = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? az : 1.0 - az;
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? ay : 1.0 - ay;
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? ax : 1.0 - ax;
        if (wx == 0.0) continue;
        v += wx * wy * wz * grid.value_or_zero(i + dx, j + dy, k + dz);
      }
    }
  }
  return v;
}

VoxelGrid warp(const VoxelGrid& moving, const SimilarityTransform& t, WarpMode mode) {
  t.validate(1e-6);
  const bool threshold = mode == WarpMode::binary || (mode == WarpMode::automatic && moving.is_binary());
  const Geometry& out_geom = t.fixed_grid;
  VoxelGrid out(out_geom);
  const auto& d = out_geom.dims;
  const auto& mg = moving.geometry();
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        const Vec3 q = out_geom.world({i, j, k});
        const Eigen::Vector3d p = t.apply_inverse(to_eigen(q));
        double v = sample_trilinear(moving, mg.continuous_index({p.x(), p.y(), p.z()}));
        if (threshold) v = v >= 0.5 ? 1.0 : 0.0;
        out.at(i, j, k) = v;
      }
  return out;
}

}  // namespace voxshape
