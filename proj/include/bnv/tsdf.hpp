#pragma once

#include <optional>
#include <unordered_map>

#include "bnv/geometry.hpp"
#include "bnv/parallel.hpp"
#include "bnv/volume.hpp"

namespace bnv {

// Classic sparse voxel-grid TSDF fusion baseline. Stored distances are
// normalized to [-1, 1] by the truncation band.
struct TsdfVoxel {
  double tsdf = 0.0;
  double weight = 0.0;
};

struct TsdfVolume {
  double voxel_size = 0.02;
  double truncation = 0.08;  // meters; 4x voxel size
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double weight_cap = 100.0;
  std::unordered_map<VoxelIndex, TsdfVoxel, VoxelIndexHash> voxels;

  Eigen::Vector3d voxel_center(const VoxelIndex& v) const {
    return origin + voxel_size * Eigen::Vector3d(v.x, v.y, v.z);
  }
};

// Weighted-average integration of one posed depth frame: every voxel within
// the truncation band of an observed surface along a camera ray is projected
// into the frame and updated with clamp(d - z, -tau, tau)/tau at unit weight.
void tsdf_integrate(TsdfVolume& vol, const Frame& frame, ExecMode mode = ExecMode::kParallel);

// Trilinear interpolation of the stored field, scaled back to meters.
// Unobserved when any of the 8 cell corners is missing.
std::optional<double> tsdf_query(const TsdfVolume& vol, const Eigen::Vector3d& x);

}  // namespace bnv
