#include "bnv/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bnv {

void tsdf_integrate(TsdfVolume& vol, const Frame& frame, ExecMode mode) {
  frame.intrinsics.validate();
  const CameraIntrinsics& intr = frame.intrinsics;
  const double tau = vol.truncation;
  const Pose cam_from_world = frame.pose.inverse();

  // Candidate voxels: walk each pixel ray through its truncation band.
  std::unordered_map<VoxelIndex, char, VoxelIndexHash> candidate_set;
  const double step = 0.5 * vol.voxel_size;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const double d = frame.depth.at(u, v);
      if (d <= 0.0) continue;
      const Ray ray = pixel_ray(intr, frame.pose, u, v);
      const double cosz = pixel_ray_cos(intr, u, v);
      const double t_lo = std::max(0.05, (d - tau) / cosz);
      const double t_hi = (d + tau) / cosz;
      for (double t = t_lo; t <= t_hi; t += step) {
        const Eigen::Vector3d p = ray.origin + t * ray.direction;
        const Eigen::Vector3d g = (p - vol.origin) / vol.voxel_size;
        candidate_set.emplace(
            VoxelIndex{static_cast<std::int32_t>(std::lround(g.x())),
                       static_cast<std::int32_t>(std::lround(g.y())),
                       static_cast<std::int32_t>(std::lround(g.z()))},
            0);
      }
    }
  }
  std::vector<VoxelIndex> candidates;
  candidates.reserve(candidate_set.size());
  for (const auto& [idx, tag] : candidate_set) candidates.push_back(idx);
  std::sort(candidates.begin(), candidates.end());

  // Per-candidate signed distance from its own projection; -2 marks "skip".
  std::vector<double> update(candidates.size(), -2.0);
  parallel_for(
      candidates.size(),
      [&](std::size_t i) {
        const Eigen::Vector3d p_cam = cam_from_world.apply(vol.voxel_center(candidates[i]));
        if (p_cam.z() <= 0.0) return;
        const Eigen::Vector2d px = project(intr, p_cam);
        const int u = static_cast<int>(std::lround(px.x()));
        const int v = static_cast<int>(std::lround(px.y()));
        if (!intr.in_bounds(u, v)) return;
        const double d = frame.depth.at(u, v);
        if (d <= 0.0) return;
        update[i] = std::clamp(d - p_cam.z(), -tau, tau) / tau;
      },
      mode);

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (update[i] < -1.5) continue;
    TsdfVoxel& voxel = vol.voxels[candidates[i]];
    voxel.tsdf = (voxel.tsdf * voxel.weight + update[i]) / (voxel.weight + 1.0);
    voxel.weight = std::min(voxel.weight + 1.0, vol.weight_cap);
  }
}

std::optional<double> tsdf_query(const TsdfVolume& vol, const Eigen::Vector3d& x) {
  const Eigen::Vector3d t = (x - vol.origin) / vol.voxel_size;
  const Eigen::Vector3d base = t.array().floor();
  const Eigen::Vector3d frac = t - base;
  const std::int32_t bx = static_cast<std::int32_t>(base.x());
  const std::int32_t by = static_cast<std::int32_t>(base.y());
  const std::int32_t bz = static_cast<std::int32_t>(base.z());

  double value = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const auto it = vol.voxels.find(VoxelIndex{bx + dx, by + dy, bz + dz});
        if (it == vol.voxels.end() || it->second.weight <= 0.0) return std::nullopt;
        const double w = (dx ? frac.x() : 1.0 - frac.x()) * (dy ? frac.y() : 1.0 - frac.y()) *
                         (dz ? frac.z() : 1.0 - frac.z());
        value += w * it->second.tsdf;
      }
  return value * vol.truncation;
}

}  // namespace bnv
