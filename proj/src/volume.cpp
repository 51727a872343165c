#include "bnv/volume.hpp"

#include <cmath>
#include <stdexcept>

namespace bnv {

void ImplicitNeuralVolume::allocate_touch(std::span<const VoxelIndex> indices) {
  for (const VoxelIndex& v : indices) {
    auto [it, inserted] = voxels.try_emplace(v);
    if (inserted) {
      it->second.latent = nn::Vector::Zero(latent_dim);
      it->second.weight = 0.0;
    }
  }
}

bool ImplicitNeuralVolume::bounding_box(Eigen::Vector3d& lo, Eigen::Vector3d& hi,
                                        double margin) const {
  if (voxels.empty()) return false;
  VoxelIndex min_idx{INT32_MAX, INT32_MAX, INT32_MAX};
  VoxelIndex max_idx{INT32_MIN, INT32_MIN, INT32_MIN};
  for (const auto& [idx, entry] : voxels) {
    min_idx.x = std::min(min_idx.x, idx.x);
    min_idx.y = std::min(min_idx.y, idx.y);
    min_idx.z = std::min(min_idx.z, idx.z);
    max_idx.x = std::max(max_idx.x, idx.x);
    max_idx.y = std::max(max_idx.y, idx.y);
    max_idx.z = std::max(max_idx.z, idx.z);
  }
  lo = (voxel_center(min_idx).array() - margin).matrix();
  hi = (voxel_center(max_idx).array() + margin).matrix();
  return true;
}

InterpolationStencil trilinear_stencil(const ImplicitNeuralVolume& vol, const Eigen::Vector3d& x) {
  const Eigen::Vector3d t = (x - vol.origin) / vol.voxel_size;
  const Eigen::Vector3d base = t.array().floor();
  const Eigen::Vector3d frac = t - base;
  const std::int32_t bx = static_cast<std::int32_t>(base.x());
  const std::int32_t by = static_cast<std::int32_t>(base.y());
  const std::int32_t bz = static_cast<std::int32_t>(base.z());

  InterpolationStencil st;
  int k = 0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx, ++k) {
        StencilCorner& corner = st.corners[k];
        corner.index = {bx + dx, by + dy, bz + dz};
        corner.weight = (dx ? frac.x() : 1.0 - frac.x()) * (dy ? frac.y() : 1.0 - frac.y()) *
                        (dz ? frac.z() : 1.0 - frac.z());
        const VoxelEntry* entry = vol.get(corner.index);
        corner.allocated = entry != nullptr && entry->weight > 0.0;
        if (corner.allocated) st.allocated_mass += corner.weight;
      }
  return st;
}

namespace {

// (point, corner) pair of one blended decode, with renormalized weight.
struct DecodePair {
  std::size_t point;
  const VoxelEntry* entry;
  VoxelIndex index;
  double weight;
  Eigen::Vector3d local;  // (x - corner center)/patch_radius
};

// Stencil pass: fills pair lists per point, flagging unobserved queries.
void collect_pairs(const ImplicitNeuralVolume& vol, const Codec& codec,
                   std::span<const Eigen::Vector3d> points, std::vector<std::uint8_t>& observed,
                   std::vector<std::vector<DecodePair>>& per_point, ExecMode mode) {
  const std::size_t n = points.size();
  observed.assign(n, 0);
  per_point.assign(n, {});
  parallel_for(
      n,
      [&](std::size_t i) {
        const InterpolationStencil st = trilinear_stencil(vol, points[i]);
        if (st.allocated_mass < kDecodeMinMass) return;
        observed[i] = 1;
        auto& pairs = per_point[i];
        for (const StencilCorner& corner : st.corners) {
          if (!corner.allocated || corner.weight == 0.0) continue;
          DecodePair pair;
          pair.point = i;
          pair.entry = vol.get(corner.index);
          pair.index = corner.index;
          pair.weight = corner.weight / st.allocated_mass;
          pair.local = (points[i] - vol.voxel_center(corner.index)) / codec.patch_radius;
          pairs.push_back(pair);
        }
      },
      mode);
}

}  // namespace

void decode_sdf_batch(const ImplicitNeuralVolume& vol, const Codec& codec,
                      std::span<const Eigen::Vector3d> points, std::vector<double>& sdf,
                      std::vector<std::uint8_t>& observed, ExecMode mode) {
  const std::size_t n = points.size();
  sdf.assign(n, 0.0);
  std::vector<std::vector<DecodePair>> per_point;
  collect_pairs(vol, codec, points, observed, per_point, mode);

  std::vector<const DecodePair*> pairs;
  for (const auto& list : per_point)
    for (const auto& pair : list) pairs.push_back(&pair);
  if (pairs.empty()) return;

  nn::Matrix rows(static_cast<Eigen::Index>(pairs.size()), codec.latent_dim + 3);
  parallel_for(
      pairs.size(),
      [&](std::size_t r) {
        rows.row(static_cast<Eigen::Index>(r)).head(codec.latent_dim) =
            pairs[r]->entry->latent.transpose();
        rows.row(static_cast<Eigen::Index>(r)).tail(3) = pairs[r]->local.transpose();
      },
      mode);

  const nn::Matrix out = nn::mlp_forward(codec.decoder, rows, nullptr, mode);
  for (std::size_t r = 0; r < pairs.size(); ++r)
    sdf[pairs[r]->point] += pairs[r]->weight * out(static_cast<Eigen::Index>(r), 0) *
                            codec.patch_radius;
}

std::optional<double> decode_sdf(const ImplicitNeuralVolume& vol, const Codec& codec,
                                 const Eigen::Vector3d& x) {
  std::vector<double> sdf;
  std::vector<std::uint8_t> observed;
  decode_sdf_batch(vol, codec, std::span<const Eigen::Vector3d>(&x, 1), sdf, observed,
                   ExecMode::kSerial);
  if (!observed[0]) return std::nullopt;
  return sdf[0];
}

std::vector<CornerLatentGrad> decode_sdf_backward(const ImplicitNeuralVolume& vol,
                                                  const Codec& codec, const Eigen::Vector3d& x,
                                                  double dl_ds) {
  const InterpolationStencil st = trilinear_stencil(vol, x);
  if (st.allocated_mass < kDecodeMinMass)
    throw std::invalid_argument("decode_sdf_backward: point is unobserved");

  std::vector<CornerLatentGrad> grads;
  for (const StencilCorner& corner : st.corners) {
    if (!corner.allocated || corner.weight == 0.0) continue;
    const VoxelEntry* entry = vol.get(corner.index);
    const Eigen::Vector3d local = (x - vol.voxel_center(corner.index)) / codec.patch_radius;
    const DecodeGradient g = decode_point_gradient(codec, entry->latent, local);
    CornerLatentGrad cg;
    cg.index = corner.index;
    cg.dlatent = dl_ds * (corner.weight / st.allocated_mass) * g.dlatent;
    grads.push_back(std::move(cg));
  }
  return grads;
}

}  // namespace bnv
