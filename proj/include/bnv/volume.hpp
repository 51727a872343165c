#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "bnv/codec.hpp"
#include "bnv/nn.hpp"
#include "bnv/parallel.hpp"

namespace bnv {

struct VoxelIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const {
    return static_cast<std::size_t>(static_cast<std::uint32_t>(v.x) * 73856093u ^
                                    static_cast<std::uint32_t>(v.y) * 19349669u ^
                                    static_cast<std::uint32_t>(v.z) * 83492791u);
  }
};

// weight == 0 marks an allocated-but-unobserved voxel; such entries do not
// contribute to decoding.
struct VoxelEntry {
  nn::Vector latent;
  double weight = 0.0;
};

// Sparse grid of latent codes; the global scene representation. Voxel (i,j,k)
// is centered at origin + voxel_size * (i,j,k).
struct ImplicitNeuralVolume {
  double voxel_size = 0.02;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  int latent_dim = 8;
  std::unordered_map<VoxelIndex, VoxelEntry, VoxelIndexHash> voxels;

  Eigen::Vector3d voxel_center(const VoxelIndex& v) const {
    return origin + voxel_size * Eigen::Vector3d(v.x, v.y, v.z);
  }
  // Voxel whose cube contains p.
  VoxelIndex containing_voxel(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d t = (p - origin) / voxel_size;
    return {static_cast<std::int32_t>(std::lround(t.x())),
            static_cast<std::int32_t>(std::lround(t.y())),
            static_cast<std::int32_t>(std::lround(t.z()))};
  }

  const VoxelEntry* get(const VoxelIndex& v) const {
    const auto it = voxels.find(v);
    return it == voxels.end() ? nullptr : &it->second;
  }
  void set(const VoxelIndex& v, VoxelEntry entry) { voxels[v] = std::move(entry); }
  // Inserts zero-latent, zero-weight entries; existing entries are untouched.
  void allocate_touch(std::span<const VoxelIndex> indices);

  // Min/max over allocated voxel centers, padded by margin. False when empty.
  bool bounding_box(Eigen::Vector3d& lo, Eigen::Vector3d& hi, double margin = 0.0) const;
};

struct StencilCorner {
  VoxelIndex index;
  double weight = 0.0;  // trilinear weight within the full 8-corner cell
  bool allocated = false;
};

// The 8 lattice corners of the cell containing a query point. Full weights
// always sum to 1; allocated_mass is the weight sum over observed corners.
struct InterpolationStencil {
  std::array<StencilCorner, 8> corners;
  double allocated_mass = 0.0;
};

InterpolationStencil trilinear_stencil(const ImplicitNeuralVolume& vol, const Eigen::Vector3d& x);

// Observation threshold: a query decodes only when at least this much
// trilinear mass comes from observed corners.
inline constexpr double kDecodeMinMass = 0.5;

// Eq-style blended decode: renormalized trilinear mix of per-corner decoder
// outputs, in meters. nullopt when the point is unobserved.
std::optional<double> decode_sdf(const ImplicitNeuralVolume& vol, const Codec& codec,
                                 const Eigen::Vector3d& x);

// Batched decode with all decoder evaluations packed into row-chunked GEMMs.
// observed[i] == 0 marks unobserved points (sdf[i] is then meaningless).
void decode_sdf_batch(const ImplicitNeuralVolume& vol, const Codec& codec,
                      std::span<const Eigen::Vector3d> points, std::vector<double>& sdf,
                      std::vector<std::uint8_t>& observed, ExecMode mode = ExecMode::kParallel);

struct CornerLatentGrad {
  VoxelIndex index;
  nn::Vector dlatent;
};

// Gradient of the blended decode with respect to each contributing latent;
// the decoder itself is frozen. Throws if the point is unobserved.
std::vector<CornerLatentGrad> decode_sdf_backward(const ImplicitNeuralVolume& vol,
                                                  const Codec& codec, const Eigen::Vector3d& x,
                                                  double dl_ds);

}  // namespace bnv
