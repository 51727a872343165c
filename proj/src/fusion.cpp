#include "bnv/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

#include "bnv/point_grid.hpp"

namespace bnv {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

SingleViewVolume encode_depth_to_volume(const Frame& frame, const Codec& codec,
                                        const FusionConfig& cfg, double voxel_size,
                                        const Eigen::Vector3d& origin, ExecMode mode) {
  frame.intrinsics.validate();
  frame.pose.validate();

  SingleViewVolume sv;
  sv.voxel_size = voxel_size;
  sv.origin = origin;
  sv.latent_dim = codec.latent_dim;

  const PointCloud cam_cloud = estimate_normals(frame.depth, frame.intrinsics);
  if (cam_cloud.size() == 0) return sv;
  const PointCloud cloud = transform(frame.pose, cam_cloud);

  // Voxels containing at least one point, in deterministic order.
  std::vector<VoxelIndex> touched;
  {
    std::unordered_map<VoxelIndex, char, VoxelIndexHash> seen;
    seen.reserve(cloud.size());
    for (const auto& p : cloud.points) seen.emplace(sv.containing_voxel(p), 0);
    touched.reserve(seen.size());
    for (const auto& [idx, tag] : seen) touched.push_back(idx);
    std::sort(touched.begin(), touched.end());
  }

  const double r = codec.patch_radius;
  PointGrid grid(cloud.points, r);

  // Patch gather per voxel, then every patch point through the encoder in one
  // batched pass with a segmented mean per voxel.
  std::vector<std::vector<std::size_t>> patches(touched.size());
  parallel_for(
      touched.size(),
      [&](std::size_t i) { grid.neighbors_within(sv.voxel_center(touched[i]), r, patches[i]); },
      mode);

  std::vector<std::size_t> offsets(touched.size() + 1, 0);
  for (std::size_t i = 0; i < touched.size(); ++i) {
    const std::size_t count =
        patches[i].size() >= static_cast<std::size_t>(cfg.min_points) ? patches[i].size() : 0;
    offsets[i + 1] = offsets[i] + count;
  }
  const std::size_t total_rows = offsets.back();
  if (total_rows == 0) return sv;

  nn::Matrix rows(static_cast<Eigen::Index>(total_rows), 6);
  parallel_for(
      touched.size(),
      [&](std::size_t i) {
        if (offsets[i + 1] == offsets[i]) return;
        const Eigen::Vector3d center = sv.voxel_center(touched[i]);
        Eigen::Index row = static_cast<Eigen::Index>(offsets[i]);
        for (std::size_t idx : patches[i]) {
          rows.row(row).head<3>() = ((cloud.points[idx] - center) / r).transpose();
          rows.row(row).tail<3>() = cloud.normals[idx].transpose();
          ++row;
        }
      },
      mode);

  const nn::Matrix features = nn::mlp_forward(codec.encoder, rows, nullptr, mode);

  for (std::size_t i = 0; i < touched.size(); ++i) {
    const std::size_t count = offsets[i + 1] - offsets[i];
    if (count == 0) continue;
    VoxelEntry entry;
    entry.latent = features.middleRows(static_cast<Eigen::Index>(offsets[i]),
                                       static_cast<Eigen::Index>(count))
                       .colwise()
                       .mean()
                       .transpose();
    entry.weight = static_cast<double>(count);
    sv.voxels.emplace(touched[i], std::move(entry));
  }
  return sv;
}

void local_fuse(ImplicitNeuralVolume& global, const SingleViewVolume& sv,
                const FusionConfig& cfg) {
  if (global.voxel_size != sv.voxel_size || global.origin != sv.origin ||
      global.latent_dim != sv.latent_dim)
    throw std::invalid_argument("local_fuse: volume grids do not match");
  for (const auto& [idx, update] : sv.voxels) {
    auto [it, inserted] = global.voxels.try_emplace(idx);
    VoxelEntry& entry = it->second;
    if (inserted) {
      entry.latent = nn::Vector::Zero(global.latent_dim);
      entry.weight = 0.0;
    }
    const double w_prev = entry.weight;
    const double w_new = update.weight;
    if (w_prev + w_new <= 0.0) continue;
    entry.latent = (w_prev * entry.latent + w_new * update.latent) / (w_prev + w_new);
    entry.weight = std::min(w_prev + w_new, cfg.weight_cap);
  }
}

double projective_tsdf(double measured_depth, double sample_depth, double delta) {
  if (measured_depth <= 0.0 || sample_depth <= 0.0)
    throw std::invalid_argument("projective_tsdf: depths must be positive");
  return std::clamp(measured_depth - sample_depth, -delta, delta);
}

std::vector<RaySample> sample_ray_points(const Ray& ray, double measured_depth,
                                         const FusionConfig& cfg, Rng& rng) {
  if (measured_depth <= 0.0)
    throw std::invalid_argument("sample_ray_points: measured depth must be positive");
  std::vector<RaySample> samples;
  const double delta = cfg.trunc_delta;

  const double coarse_lo = cfg.ray_near;
  const double coarse_hi = measured_depth + delta;
  if (coarse_hi > coarse_lo) {
    const double span = coarse_hi - coarse_lo;
    const int n = std::max(1, static_cast<int>(std::lround(span * cfg.coarse_density)));
    const double stride = span / n;
    for (int i = 0; i < n; ++i) {
      const double t = coarse_lo + (i + rng.uniform()) * stride;
      samples.push_back({t, ray.origin + t * ray.direction,
                         projective_tsdf(measured_depth, t, delta)});
    }
  }

  const double fine_lo = std::max(0.01, measured_depth - 2.0 * delta);
  const double fine_hi = measured_depth + delta;
  const double stride = (fine_hi - fine_lo) / cfg.fine_count;
  for (int i = 0; i < cfg.fine_count; ++i) {
    const double t = fine_lo + (i + rng.uniform()) * stride;
    samples.push_back({t, ray.origin + t * ray.direction,
                       projective_tsdf(measured_depth, t, delta)});
  }
  return samples;
}

FusionEngine::FusionEngine(const Codec& codec, const FusionConfig& cfg, FusionMethod method,
                           std::uint64_t seed, double voxel_size, const Eigen::Vector3d& origin)
    : codec_(codec), cfg_(cfg), method_(method), rng_(seed) {
  volume_.voxel_size = voxel_size;
  volume_.origin = origin;
  volume_.latent_dim = codec.latent_dim;
}

void FusionEngine::fuse_random_init(const SingleViewVolume& sv) {
  // The no-local-fusion arm: new voxels get seeded random latents and are
  // shaped purely by the rendering loss; weights accumulate as usual so the
  // observation bookkeeping stays comparable.
  std::vector<VoxelIndex> order;
  order.reserve(sv.voxels.size());
  for (const auto& [idx, entry] : sv.voxels) order.push_back(idx);
  std::sort(order.begin(), order.end());
  for (const VoxelIndex& idx : order) {
    const VoxelEntry& update = *sv.get(idx);
    auto [it, inserted] = volume_.voxels.try_emplace(idx);
    VoxelEntry& entry = it->second;
    if (inserted || entry.weight <= 0.0) {
      entry.latent = nn::Vector::Zero(volume_.latent_dim);
      for (int d = 0; d < volume_.latent_dim; ++d)
        entry.latent(d) = rng_.normal(0.0, cfg_.random_init_sigma);
      entry.weight = 0.0;
    }
    entry.weight = std::min(entry.weight + update.weight, cfg_.weight_cap);
  }
}

FrameStats FusionEngine::integrate_frame(const Frame& frame, ExecMode mode) {
  FrameStats stats;
  auto t0 = std::chrono::steady_clock::now();
  const SingleViewVolume sv =
      encode_depth_to_volume(frame, codec_, cfg_, volume_.voxel_size, volume_.origin, mode);
  stats.encode_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  if (method_ == FusionMethod::kGlobalRandomInit)
    fuse_random_init(sv);
  else
    local_fuse(volume_, sv, cfg_);
  stats.fuse_ms = elapsed_ms(t0);

  Keyframe kf;
  kf.depth = frame.depth;
  kf.intrinsics = frame.intrinsics;
  kf.pose = frame.pose;
  kf.budget = cfg_.max_samples_per_keyframe;
  for (int i = 0; i < frame.depth.width * frame.depth.height; ++i)
    if (frame.depth.data[static_cast<std::size_t>(i)] > 0.0) kf.valid_pixels.push_back(i);
  keyframes_.frames.push_back(std::move(kf));

  t0 = std::chrono::steady_clock::now();
  if (method_ != FusionMethod::kLocalOnly) {
    for (int i = 0; i < cfg_.iters_per_frame; ++i) {
      const auto loss = global_iteration(mode);
      if (!loss.has_value()) break;
      stats.losses.push_back(*loss);
      ++stats.iterations;
    }
  }
  stats.global_ms = elapsed_ms(t0);
  stats.voxel_count = volume_.voxels.size();
  return stats;
}

namespace {

// Flattened (sample point, stencil corner) pair for the batched decode.
struct IterPair {
  std::size_t sample;         // index into the observed-sample arrays
  const VoxelEntry* entry;
  VoxelIndex index;
  double weight;              // renormalized trilinear weight
  Eigen::Vector3d local;
};

}  // namespace

std::optional<double> FusionEngine::global_iteration(ExecMode mode) {
  std::vector<std::size_t> budgeted;
  for (std::size_t i = 0; i < keyframes_.frames.size(); ++i)
    if (keyframes_.frames[i].budget > 0) budgeted.push_back(i);
  if (budgeted.empty()) return std::nullopt;

  Keyframe& kf = keyframes_.frames[budgeted[rng_.uniform_index(budgeted.size())]];
  kf.budget -= 1;
  if (kf.valid_pixels.empty()) return 0.0;

  // Draw pixels and per-pixel substream seeds up front so the parallel phase
  // is independent of scheduling.
  const int n_pixels = cfg_.pixels_per_iter;
  std::vector<int> pixels(n_pixels);
  std::vector<std::uint64_t> subseeds(n_pixels);
  for (int i = 0; i < n_pixels; ++i) {
    pixels[i] = kf.valid_pixels[rng_.uniform_index(kf.valid_pixels.size())];
    subseeds[i] = rng_.next_u64();
  }

  // Phase A: rays, projective TSDF observations, stencils.
  struct SlotSample {
    double tsdf_obs;
    Eigen::Vector3d point;
  };
  std::vector<std::vector<SlotSample>> slot_samples(n_pixels);
  parallel_for(
      static_cast<std::size_t>(n_pixels),
      [&](std::size_t slot) {
        Rng pixel_rng(subseeds[slot]);
        const int u = pixels[slot] % kf.intrinsics.width;
        const int v = pixels[slot] / kf.intrinsics.width;
        const double z = kf.depth.at(u, v);
        const Ray ray = pixel_ray(kf.intrinsics, kf.pose, u, v);
        const double d_ray = z / pixel_ray_cos(kf.intrinsics, u, v);
        for (const RaySample& rs : sample_ray_points(ray, d_ray, cfg_, pixel_rng))
          slot_samples[slot].push_back({rs.tsdf, rs.point});
      },
      mode);

  // Keep only observed samples, in slot order; expand their stencil pairs.
  std::vector<double> obs_tsdf;
  std::vector<IterPair> pairs;
  std::vector<std::size_t> sample_pair_begin;
  for (int slot = 0; slot < n_pixels; ++slot) {
    for (const SlotSample& s : slot_samples[slot]) {
      const InterpolationStencil st = trilinear_stencil(volume_, s.point);
      if (st.allocated_mass < kDecodeMinMass) continue;
      sample_pair_begin.push_back(pairs.size());
      for (const StencilCorner& corner : st.corners) {
        if (!corner.allocated || corner.weight == 0.0) continue;
        IterPair pair;
        pair.sample = obs_tsdf.size();
        pair.entry = volume_.get(corner.index);
        pair.index = corner.index;
        pair.weight = corner.weight / st.allocated_mass;
        pair.local = (s.point - volume_.voxel_center(corner.index)) / codec_.patch_radius;
        pairs.push_back(pair);
      }
      obs_tsdf.push_back(s.tsdf_obs);
    }
  }
  const std::size_t n_samples = obs_tsdf.size();
  if (n_samples == 0) return 0.0;
  sample_pair_begin.push_back(pairs.size());

  // Phase B: decode + backprop to latents, chunked on sample boundaries so
  // each chunk owns a contiguous pair range.
  constexpr std::size_t kPairChunk = 4096;
  std::vector<std::size_t> chunk_starts{0};  // sample indices
  std::size_t chunk_pairs = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t np = sample_pair_begin[s + 1] - sample_pair_begin[s];
    if (chunk_pairs > 0 && chunk_pairs + np > kPairChunk) {
      chunk_starts.push_back(s);
      chunk_pairs = 0;
    }
    chunk_pairs += np;
  }
  chunk_starts.push_back(n_samples);

  const int latent_dim = codec_.latent_dim;
  nn::Matrix pair_dlatent(static_cast<Eigen::Index>(pairs.size()), latent_dim);
  std::vector<double> chunk_loss(chunk_starts.size() - 1, 0.0);

  parallel_for(
      chunk_starts.size() - 1,
      [&](std::size_t c) {
        const std::size_t s_begin = chunk_starts[c];
        const std::size_t s_end = chunk_starts[c + 1];
        const std::size_t p_begin = sample_pair_begin[s_begin];
        const std::size_t p_end = sample_pair_begin[s_end];
        const Eigen::Index np = static_cast<Eigen::Index>(p_end - p_begin);
        if (np == 0) return;

        nn::Matrix rows(np, latent_dim + 3);
        for (std::size_t p = p_begin; p < p_end; ++p) {
          const Eigen::Index r = static_cast<Eigen::Index>(p - p_begin);
          rows.row(r).head(latent_dim) = pairs[p].entry->latent.transpose();
          rows.row(r).tail(3) = pairs[p].local.transpose();
        }
        nn::ForwardCache cache;
        const nn::Matrix out = nn::mlp_forward(codec_.decoder, rows, &cache, ExecMode::kSerial);

        // Blend per sample, then push sign(residual) back through the blend.
        nn::Matrix dl_dout(np, 1);
        double loss = 0.0;
        for (std::size_t s = s_begin; s < s_end; ++s) {
          double sdf = 0.0;
          for (std::size_t p = sample_pair_begin[s]; p < sample_pair_begin[s + 1]; ++p)
            sdf += pairs[p].weight * out(static_cast<Eigen::Index>(p - p_begin), 0) *
                   codec_.patch_radius;
          const double res = sdf - obs_tsdf[s];
          loss += std::abs(res);
          const double sign = res > 0.0 ? 1.0 : (res < 0.0 ? -1.0 : 0.0);
          for (std::size_t p = sample_pair_begin[s]; p < sample_pair_begin[s + 1]; ++p)
            dl_dout(static_cast<Eigen::Index>(p - p_begin), 0) =
                sign * pairs[p].weight * codec_.patch_radius;
        }
        chunk_loss[c] = loss;

        const nn::Matrix dl_din =
            nn::mlp_backward(codec_.decoder, cache, dl_dout, nullptr, ExecMode::kSerial);
        pair_dlatent.middleRows(static_cast<Eigen::Index>(p_begin), np) =
            dl_din.leftCols(latent_dim);
      },
      mode);

  // Fixed-order scatter into per-voxel gradients of the mean loss.
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  std::map<VoxelIndex, nn::Vector> voxel_grads;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [it, inserted] = voxel_grads.try_emplace(pairs[p].index);
    if (inserted) it->second = nn::Vector::Zero(latent_dim);
    it->second += inv_n * pair_dlatent.row(static_cast<Eigen::Index>(p)).transpose();
  }

  const nn::AdamConfig adam{cfg_.lr, 0.9, 0.999, 1e-8};
  for (auto& [idx, grad] : voxel_grads) {
    auto [it, inserted] = adam_states_.try_emplace(idx);
    if (inserted) it->second = nn::AdamState::zeros(latent_dim);
    nn::adam_step(volume_.voxels.at(idx).latent, grad, it->second, adam);
  }

  double total_loss = 0.0;
  for (double l : chunk_loss) total_loss += l;
  return total_loss * inv_n;
}

}  // namespace bnv
