#include "voxshape/transform.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "voxshape/error.hpp"

namespace voxshape {

SimilarityTransform SimilarityTransform::identity(const Geometry& fixed_grid) {
  SimilarityTransform t;
  t.fixed_grid = fixed_grid;
  return t;
}

Eigen::Matrix3d SimilarityTransform::axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

void SimilarityTransform::validate(double tol) const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ArgumentError("similarity transform scale must be positive");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol) throw ArgumentError("similarity transform rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > tol)
    throw ArgumentError("similarity transform rotation has det != +1");
  if (!translation.allFinite()) throw ArgumentError("similarity transform translation is not finite");
  fixed_grid.validate();
}

SimilarityTransform inverse(const SimilarityTransform& t, const Geometry& original_grid) {
  SimilarityTransform inv;
  inv.scale = 1.0 / t.scale;
  inv.rotation = t.rotation.transpose();
  inv.translation = -(inv.rotation * t.translation) / t.scale;
  inv.fixed_grid = original_grid;
  return inv;
}

SimilarityTransform compose(const SimilarityTransform& second, const SimilarityTransform& first) {
  SimilarityTransform out;
  out.scale = second.scale * first.scale;
  out.rotation = second.rotation * first.rotation;
  out.translation = second.scale * (second.rotation * first.translation) + second.translation;
  out.fixed_grid = second.fixed_grid;
  return out;
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d rel = a * b.transpose();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

namespace {

nlohmann::json geometry_json(const Geometry& g) {
  return {{"dims", g.dims}, {"spacing", g.spacing}, {"origin", g.origin}};
}

Geometry geometry_from(const nlohmann::json& j) {
  Geometry g;
  g.dims = j.at("dims").get<Index3>();
  g.spacing = j.at("spacing").get<Vec3>();
  g.origin = j.at("origin").get<Vec3>();
  g.validate();
  return g;
}

}  // namespace

std::string transform_to_json(const SimilarityTransform& t) {
  nlohmann::json j;
  j["scale"] = t.scale;
  std::vector<double> rot;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  j["rotation"] = rot;
  j["translation"] = {t.translation.x(), t.translation.y(), t.translation.z()};
  j["fixed_grid"] = geometry_json(t.fixed_grid);
  return j.dump(2);
}

SimilarityTransform transform_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SimilarityTransform t;
    t.scale = j.at("scale").get<double>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw ParseError("transform json: rotation needs 9 values");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
    const auto tr = j.at("translation").get<std::vector<double>>();
    if (tr.size() != 3) throw ParseError("transform json: translation needs 3 values");
    t.translation = Eigen::Vector3d(tr[0], tr[1], tr[2]);
    t.fixed_grid = geometry_from(j.at("fixed_grid"));
    t.validate(1e-6);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("transform json: ") + e.what());
  }
}

}  // namespace voxshape
