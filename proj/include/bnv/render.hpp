#pragma once

#include "bnv/geometry.hpp"
#include "bnv/parallel.hpp"
#include "bnv/sdf_scene.hpp"

namespace bnv {

struct RenderOptions {
  double t_min = 0.05;        // meters along the ray
  double t_max = 12.0;
  double hit_epsilon = 5e-5;  // surface tolerance
  int max_steps = 256;
};

// Exact z-depth of the scene from a posed pinhole camera, by sphere tracing.
// Pixels whose ray escapes render as 0 (invalid).
DepthMap render_depth(const SdfScene& scene, const CameraIntrinsics& intr, const Pose& pose,
                      const RenderOptions& opts = {}, ExecMode mode = ExecMode::kParallel);

// World-from-camera pose at `eye` with the optical axis through `target`.
// Camera convention: x right, y down, z forward.
Pose look_at_pose(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                  const Eigen::Vector3d& world_up = Eigen::Vector3d::UnitZ());

}  // namespace bnv
