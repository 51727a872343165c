#include "bnv/render.hpp"

#include <cmath>

namespace bnv {

DepthMap render_depth(const SdfScene& scene, const CameraIntrinsics& intr, const Pose& pose,
                      const RenderOptions& opts, ExecMode mode) {
  intr.validate();
  DepthMap depth = DepthMap::zeros(intr.width, intr.height);
  const std::size_t n = depth.data.size();
  parallel_for(
      n,
      [&](std::size_t idx) {
        const int u = static_cast<int>(idx % intr.width);
        const int v = static_cast<int>(idx / intr.width);
        const Eigen::Vector3d dir_cam =
            Eigen::Vector3d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0).normalized();
        const Eigen::Vector3d dir = pose.rotate(dir_cam);
        const Eigen::Vector3d origin = pose.translation;
        double t = opts.t_min;
        for (int step = 0; step < opts.max_steps && t < opts.t_max; ++step) {
          const double d = scene.sdf(origin + t * dir);
          if (d < opts.hit_epsilon) {
            depth.data[idx] = t * dir_cam.z();  // store z-depth
            return;
          }
          t += std::max(d, opts.hit_epsilon);
        }
      },
      mode);
  return depth;
}

Pose look_at_pose(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                  const Eigen::Vector3d& world_up) {
  Eigen::Vector3d forward = target - eye;
  const double fn = forward.norm();
  forward = fn > 1e-12 ? Eigen::Vector3d(forward / fn) : Eigen::Vector3d::UnitZ();
  Eigen::Vector3d up = world_up;
  if (std::abs(forward.dot(up)) > 0.999) up = Eigen::Vector3d::UnitX();  // gimbal guard
  const Eigen::Vector3d right = (-up).cross(forward).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = forward;
  Pose pose;
  pose.rotation = Eigen::Quaterniond(rot).normalized();
  pose.translation = eye;
  return pose;
}

}  // namespace bnv
