#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace bnv {

// Analytic primitives with exact signed distances (negative inside). A scene
// is the union (pointwise min) of its primitives; `invert` flips a solid
// inside out, which is how a box becomes a room.
struct SdfPrimitive {
  enum class Kind { kPlane, kSphere, kBox, kCylinder, kWedge };

  Kind kind = Kind::kSphere;
  // Plane: normal `axis`, passes through `center`. Sphere: radius. Box:
  // half_extents. Cylinder: radius + half height along local z. Wedge: right
  // dihedral edge along local y, solid in the local (-x, -z) quadrant.
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Ones();
  double radius = 1.0;
  bool invert = false;
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  double sdf(const Eigen::Vector3d& p) const;
};

struct SdfScene {
  std::vector<SdfPrimitive> primitives;

  double sdf(const Eigen::Vector3d& p) const;
  // Outward unit gradient by central differences on the exact field.
  Eigen::Vector3d normal(const Eigen::Vector3d& p, double h = 1e-6) const;
  // Axis-aligned bounds enclosing every surface (with margin).
  void bounds(Eigen::Vector3d& lo, Eigen::Vector3d& hi, double margin = 0.05) const;
};

SdfPrimitive make_plane(const Eigen::Vector3d& point, const Eigen::Vector3d& normal);
SdfPrimitive make_sphere(const Eigen::Vector3d& center, double radius);
SdfPrimitive make_box(const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents,
                      const Eigen::Quaterniond& orientation = Eigen::Quaterniond::Identity(),
                      bool invert = false);
SdfPrimitive make_cylinder(const Eigen::Vector3d& center, double radius, double half_height,
                           const Eigen::Quaterniond& orientation = Eigen::Quaterniond::Identity());
SdfPrimitive make_wedge(const Eigen::Vector3d& edge_point,
                        const Eigen::Quaterniond& orientation = Eigen::Quaterniond::Identity());

}  // namespace bnv
