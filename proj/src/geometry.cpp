#include "bnv/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bnv {

void CameraIntrinsics::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: raster size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw std::invalid_argument("intrinsics: principal point outside raster");
  if (depth_scale <= 0.0) throw std::invalid_argument("intrinsics: depth_scale must be positive");
}

void Pose::validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("pose: quaternion not unit length");
}

PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& intr) {
  if (depth.width != intr.width || depth.height != intr.height)
    throw std::invalid_argument("unproject: depth raster " + std::to_string(depth.width) + "x" +
                                std::to_string(depth.height) + " does not match intrinsics " +
                                std::to_string(intr.width) + "x" + std::to_string(intr.height));
  PointCloud pc;
  pc.points.reserve(depth.data.size() / 2);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (d <= 0.0) continue;
      pc.points.emplace_back((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d);
      pc.pixel_indices.push_back(v * depth.width + u);
    }
  }
  return pc;
}

namespace {

inline Eigen::Vector3d unproject_pixel(const CameraIntrinsics& intr, int u, int v, double d) {
  return {(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d};
}

}  // namespace

PointCloud estimate_normals(const DepthMap& depth, const CameraIntrinsics& intr,
                            double discontinuity) {
  if (depth.width != intr.width || depth.height != intr.height)
    throw std::invalid_argument("estimate_normals: depth raster does not match intrinsics");
  PointCloud pc;
  for (int v = 1; v + 1 < depth.height; ++v) {
    for (int u = 1; u + 1 < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (d <= 0.0) continue;
      const double dl = depth.at(u - 1, v), dr = depth.at(u + 1, v);
      const double dt = depth.at(u, v - 1), db = depth.at(u, v + 1);
      if (dl <= 0.0 || dr <= 0.0 || dt <= 0.0 || db <= 0.0) continue;
      // Reject occlusion edges: no normal where any neighbor jumps too far.
      if (std::abs(dl - d) > discontinuity || std::abs(dr - d) > discontinuity ||
          std::abs(dt - d) > discontinuity || std::abs(db - d) > discontinuity)
        continue;
      const Eigen::Vector3d du = unproject_pixel(intr, u + 1, v, dr) - unproject_pixel(intr, u - 1, v, dl);
      const Eigen::Vector3d dv = unproject_pixel(intr, u, v + 1, db) - unproject_pixel(intr, u, v - 1, dt);
      Eigen::Vector3d n = du.cross(dv);
      const double norm = n.norm();
      if (norm < 1e-12) continue;
      n /= norm;
      const Eigen::Vector3d p = unproject_pixel(intr, u, v, d);
      if (n.dot(p) > 0.0) n = -n;  // face the camera
      pc.points.push_back(p);
      pc.normals.push_back(n);
      pc.pixel_indices.push_back(v * depth.width + u);
    }
  }
  return pc;
}

PointCloud transform(const Pose& pose, const PointCloud& pc) {
  PointCloud out;
  out.points.resize(pc.points.size());
  out.normals.resize(pc.normals.size());
  out.pixel_indices = pc.pixel_indices;
  for (std::size_t i = 0; i < pc.points.size(); ++i) out.points[i] = pose.apply(pc.points[i]);
  for (std::size_t i = 0; i < pc.normals.size(); ++i) out.normals[i] = pose.rotate(pc.normals[i]);
  return out;
}

Ray pixel_ray(const CameraIntrinsics& intr, const Pose& pose, int u, int v) {
  if (!intr.in_bounds(u, v))
    throw std::invalid_argument("pixel_ray: pixel (" + std::to_string(u) + "," + std::to_string(v) +
                                ") out of bounds");
  const Eigen::Vector3d dir_cam =
      Eigen::Vector3d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0).normalized();
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = pose.rotate(dir_cam);
  return ray;
}

Eigen::Vector2d project(const CameraIntrinsics& intr, const Eigen::Vector3d& p_cam) {
  return {intr.fx * p_cam.x() / p_cam.z() + intr.cx, intr.fy * p_cam.y() / p_cam.z() + intr.cy};
}

double pixel_ray_cos(const CameraIntrinsics& intr, int u, int v) {
  return 1.0 / Eigen::Vector3d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0).norm();
}

}  // namespace bnv
