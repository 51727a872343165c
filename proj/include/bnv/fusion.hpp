#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "bnv/codec.hpp"
#include "bnv/geometry.hpp"
#include "bnv/nn.hpp"
#include "bnv/rng.hpp"
#include "bnv/volume.hpp"

namespace bnv {

struct FusionConfig {
  int pixels_per_iter = 5000;
  double coarse_density = 5.0;  // ray samples per meter
  int fine_count = 20;          // samples in the near-surface window
  double trunc_delta = 0.10;    // meters
  int iters_per_frame = 5;
  int max_samples_per_keyframe = 5;
  double lr = 0.01;             // latent Adam learning rate
  double weight_cap = 100.0;
  int min_points = 3;           // patch points required to encode a voxel
  double ray_near = 0.1;        // meters; start of the coarse span
  double random_init_sigma = 0.3;  // latent std-dev for the random-init arm
};

enum class FusionMethod { kBiLevel, kLocalOnly, kGlobalRandomInit };

// One frame's encoding: the same sparse latent grid layout, holding latents in
// world coordinates with weights equal to the patch point counts.
using SingleViewVolume = ImplicitNeuralVolume;

// Unprojects the frame with normals, transforms to world, and encodes a patch
// around every voxel that contains at least one point. Voxels whose patch has
// fewer than cfg.min_points points are skipped. Encoder evaluations for all
// patches run as one batched forward pass.
SingleViewVolume encode_depth_to_volume(const Frame& frame, const Codec& codec,
                                        const FusionConfig& cfg, double voxel_size = 0.02,
                                        const Eigen::Vector3d& origin = Eigen::Vector3d::Zero(),
                                        ExecMode mode = ExecMode::kParallel);

// Weighted latent averaging: V <- (W V + W_s V_s)/(W + W_s), W <- min(W + W_s,
// cap). Missing global voxels are allocated first.
void local_fuse(ImplicitNeuralVolume& global, const SingleViewVolume& sv, const FusionConfig& cfg);

// Signed along-ray distance clamp(measured - sample, -delta, +delta); positive
// in front of the surface. Both depths must be positive.
double projective_tsdf(double measured_depth, double sample_depth, double delta);

struct RaySample {
  double t = 0.0;           // distance along the ray, meters
  Eigen::Vector3d point;    // world position
  double tsdf = 0.0;        // projective TSDF observation at t
};

// Stratified coarse samples over [ray_near, d + delta] at coarse_density per
// meter plus fine_count stratified samples in [d - 2 delta, d + delta], where
// d = measured depth along the ray.
std::vector<RaySample> sample_ray_points(const Ray& ray, double measured_depth,
                                         const FusionConfig& cfg, Rng& rng);

struct Keyframe {
  DepthMap depth;
  CameraIntrinsics intrinsics;
  Pose pose;
  int budget = 0;                  // remaining optimization draws
  std::vector<int> valid_pixels;   // linear indices with depth > 0
};

struct KeyframeStore {
  std::vector<Keyframe> frames;

  int total_budget() const {
    int b = 0;
    for (const auto& f : frames) b += f.budget;
    return b;
  }
};

struct FrameStats {
  double encode_ms = 0.0;
  double fuse_ms = 0.0;
  double global_ms = 0.0;
  int iterations = 0;
  std::vector<double> losses;      // mean L1 per iteration, meters
  std::size_t voxel_count = 0;     // global voxels after integration
};

// Owns the global volume, the keyframe store and per-latent Adam state.
// Frames are integrated one at a time (single writer); the internals of each
// iteration are data-parallel against the frozen volume.
class FusionEngine {
 public:
  FusionEngine(const Codec& codec, const FusionConfig& cfg, FusionMethod method,
               std::uint64_t seed, double voxel_size = 0.02,
               const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

  // encode -> fuse -> enqueue keyframe -> cfg.iters_per_frame global
  // iterations (none for the local-only arm).
  FrameStats integrate_frame(const Frame& frame, ExecMode mode = ExecMode::kParallel);

  // One rendering-loss iteration against a randomly drawn budgeted keyframe.
  // nullopt when every keyframe's budget is exhausted (a no-op, not an error).
  std::optional<double> global_iteration(ExecMode mode = ExecMode::kParallel);

  const ImplicitNeuralVolume& volume() const { return volume_; }
  ImplicitNeuralVolume& volume() { return volume_; }
  KeyframeStore& keyframes() { return keyframes_; }
  const Codec& codec() const { return codec_; }
  const FusionConfig& config() const { return cfg_; }

 private:
  void fuse_random_init(const SingleViewVolume& sv);

  const Codec& codec_;
  FusionConfig cfg_;
  FusionMethod method_;
  ImplicitNeuralVolume volume_;
  KeyframeStore keyframes_;
  std::unordered_map<VoxelIndex, nn::AdamState, VoxelIndexHash> adam_states_;
  Rng rng_;
};

}  // namespace bnv
