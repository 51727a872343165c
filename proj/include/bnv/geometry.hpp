#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace bnv {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 1.0 / 1000.0;  // raster unit -> meters

  void validate() const;
  bool in_bounds(int u, int v) const { return u >= 0 && u < width && v >= 0 && v < height; }
};

// Rigid world-from-camera transform. apply() maps camera-frame points to world.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return rotation * v; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.conjugate();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  Pose compose(const Pose& other) const {
    // this ∘ other: apply `other` first.
    Pose out;
    out.rotation = rotation * other.rotation;
    out.rotation.normalize();
    out.translation = rotation * other.translation + translation;
    return out;
  }

  void validate() const;
};

// Z-depth raster in meters; 0 marks an invalid pixel.
struct DepthMap {
  std::vector<double> data;
  int width = 0;
  int height = 0;

  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }

  static DepthMap zeros(int width, int height) {
    DepthMap d;
    d.width = width;
    d.height = height;
    d.data.assign(static_cast<std::size_t>(width) * height, 0.0);
    return d;
  }
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;  // empty until estimated; unit length
  std::vector<int> pixel_indices;        // source pixel v*width+u, parallel to points

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // unit length
};

// One posed depth measurement; the unit of input for fusion.
struct Frame {
  DepthMap depth;
  CameraIntrinsics intrinsics;
  Pose pose;  // world-from-camera
};

// Back-projects valid pixels to camera-frame points: pixel (u,v) at depth d
// maps to ((u-cx)d/fx, (v-cy)d/fy, d). Pixel centers sit at integer (u,v).
PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& intr);

// Unprojects and attaches per-pixel normals from central differences of the
// camera-frame positions, oriented toward the camera. Pixels with invalid
// neighbors or a depth jump above `discontinuity` against any neighbor are
// dropped from the output entirely.
PointCloud estimate_normals(const DepthMap& depth, const CameraIntrinsics& intr,
                            double discontinuity = 0.05);

// Rigidly transforms a cloud: points rotated + translated, normals rotated.
PointCloud transform(const Pose& pose, const PointCloud& pc);

// World-frame ray through the center of pixel (u,v).
Ray pixel_ray(const CameraIntrinsics& intr, const Pose& pose, int u, int v);

// Camera-frame point -> continuous pixel coordinates (no bounds check).
Eigen::Vector2d project(const CameraIntrinsics& intr, const Eigen::Vector3d& p_cam);

// Cosine between the pixel ray and the optical axis; converts z-depth to
// distance along the ray as depth / pixel_ray_cos.
double pixel_ray_cos(const CameraIntrinsics& intr, int u, int v);

}  // namespace bnv
