#include "bnv/sdf_scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bnv {

namespace {

inline double box_sdf(const Eigen::Vector3d& p, const Eigen::Vector3d& half) {
  const Eigen::Vector3d q = p.cwiseAbs() - half;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

inline double cylinder_sdf(const Eigen::Vector3d& p, double radius, double half_height) {
  const double dr = std::hypot(p.x(), p.y()) - radius;
  const double dz = std::abs(p.z()) - half_height;
  const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
  const double inside = std::min(std::max(dr, dz), 0.0);
  return outside + inside;
}

// Right dihedral corner: solid where x <= 0 and z <= 0, edge along y.
inline double wedge_sdf(const Eigen::Vector3d& p) {
  if (p.x() > 0.0 && p.z() > 0.0) return std::hypot(p.x(), p.z());
  return std::max(p.x(), p.z());
}

}  // namespace

double SdfPrimitive::sdf(const Eigen::Vector3d& p_world) const {
  const Eigen::Vector3d p = orientation.conjugate() * (p_world - center);
  double d;
  switch (kind) {
    case Kind::kPlane:
      d = axis.dot(p);
      break;
    case Kind::kSphere:
      d = p.norm() - radius;
      break;
    case Kind::kBox:
      d = box_sdf(p, half_extents);
      break;
    case Kind::kCylinder:
      d = cylinder_sdf(p, radius, half_extents.z());
      break;
    case Kind::kWedge:
      d = wedge_sdf(p);
      break;
    default:
      d = std::numeric_limits<double>::infinity();
  }
  return invert ? -d : d;
}

double SdfScene::sdf(const Eigen::Vector3d& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : primitives) d = std::min(d, prim.sdf(p));
  return d;
}

Eigen::Vector3d SdfScene::normal(const Eigen::Vector3d& p, double h) const {
  Eigen::Vector3d g;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d dp = Eigen::Vector3d::Zero();
    dp[a] = h;
    g[a] = (sdf(p + dp) - sdf(p - dp)) / (2.0 * h);
  }
  const double n = g.norm();
  return n > 1e-12 ? Eigen::Vector3d(g / n) : Eigen::Vector3d::UnitZ();
}

void SdfScene::bounds(Eigen::Vector3d& lo, Eigen::Vector3d& hi, double margin) const {
  lo.setConstant(std::numeric_limits<double>::infinity());
  hi.setConstant(-std::numeric_limits<double>::infinity());
  for (const auto& prim : primitives) {
    // Conservative per-primitive radius around its center.
    double r;
    switch (prim.kind) {
      case SdfPrimitive::Kind::kSphere:
        r = prim.radius;
        break;
      case SdfPrimitive::Kind::kBox:
        r = prim.half_extents.norm();
        break;
      case SdfPrimitive::Kind::kCylinder:
        r = std::hypot(prim.radius, prim.half_extents.z());
        break;
      default:
        r = 2.0;  // unbounded primitives clipped to a working region
    }
    lo = lo.cwiseMin((prim.center.array() - r - margin).matrix());
    hi = hi.cwiseMax((prim.center.array() + r + margin).matrix());
  }
  if (!lo.allFinite() || !hi.allFinite()) {
    lo = Eigen::Vector3d::Constant(-2.0);
    hi = Eigen::Vector3d::Constant(2.0);
  }
}

SdfPrimitive make_plane(const Eigen::Vector3d& point, const Eigen::Vector3d& normal) {
  SdfPrimitive prim;
  prim.kind = SdfPrimitive::Kind::kPlane;
  prim.center = point;
  prim.axis = normal.normalized();
  return prim;
}

SdfPrimitive make_sphere(const Eigen::Vector3d& center, double radius) {
  SdfPrimitive prim;
  prim.kind = SdfPrimitive::Kind::kSphere;
  prim.center = center;
  prim.radius = radius;
  return prim;
}

SdfPrimitive make_box(const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents,
                      const Eigen::Quaterniond& orientation, bool invert) {
  SdfPrimitive prim;
  prim.kind = SdfPrimitive::Kind::kBox;
  prim.center = center;
  prim.half_extents = half_extents;
  prim.orientation = orientation.normalized();
  prim.invert = invert;
  return prim;
}

SdfPrimitive make_cylinder(const Eigen::Vector3d& center, double radius, double half_height,
                           const Eigen::Quaterniond& orientation) {
  SdfPrimitive prim;
  prim.kind = SdfPrimitive::Kind::kCylinder;
  prim.center = center;
  prim.radius = radius;
  prim.half_extents = Eigen::Vector3d(0, 0, half_height);
  prim.orientation = orientation.normalized();
  return prim;
}

SdfPrimitive make_wedge(const Eigen::Vector3d& edge_point, const Eigen::Quaterniond& orientation) {
  SdfPrimitive prim;
  prim.kind = SdfPrimitive::Kind::kWedge;
  prim.center = edge_point;
  prim.orientation = orientation.normalized();
  return prim;
}

}  // namespace bnv
