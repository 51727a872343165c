#pragma once

#include <vector>

#include <Eigen/Core>

#include "bnv/nn.hpp"
#include "bnv/parallel.hpp"
#include "bnv/rng.hpp"
#include "bnv/sdf_scene.hpp"

namespace bnv {

// Local shape embedding. The encoder maps an oriented point (position in
// patch units, unit normal -> 6 inputs) to a feature; features are averaged
// over the patch into the latent code. The decoder maps latent + local
// coordinate to a signed distance in patch units.
struct Codec {
  nn::Mlp encoder;  // 6 -> [128,128,128,latent_dim]
  nn::Mlp decoder;  // latent_dim+3 -> [128,128,128,1]
  int latent_dim = 8;
  double patch_radius = 0.03;  // meters; local coords are (p - center)/patch_radius
};

Codec make_codec(Rng& rng, int latent_dim = 8, double patch_radius = 0.03);

// Average-pooled encoder output. `local_points` rows are [pos/radius, normal];
// throws on an empty patch.
nn::Vector encode_patch(const Codec& codec, const nn::Matrix& local_points,
                        ExecMode mode = ExecMode::kParallel);

// Signed distance in meters at a patch-local query (normalized units).
double decode_point(const Codec& codec, const nn::Vector& latent, const Eigen::Vector3d& x_local);

// Batch decode against one latent; returns meters, one value per query row.
nn::Vector decode_batch(const Codec& codec, const nn::Vector& latent, const nn::Matrix& queries,
                        ExecMode mode = ExecMode::kParallel);

// d(decode_point)/d(latent) and /d(x_local), in meters per unit input.
struct DecodeGradient {
  nn::Vector dlatent;
  Eigen::Vector3d dx_local;
};
DecodeGradient decode_point_gradient(const Codec& codec, const nn::Vector& latent,
                                     const Eigen::Vector3d& x_local);

// One supervised patch: encoder inputs plus query points with exact signed
// distances from the analytic shape that generated them.
struct PatchSample {
  nn::Matrix local_points;  // K x 6
  nn::Matrix query_points;  // M x 3, patch units
  nn::Vector query_sdf;     // M, meters
};

struct PatchConfig {
  double patch_radius = 0.03;
  int seeds_per_view = 2000;
  int queries_per_patch = 1000;
  double surface_noise_sigma = 0.005;   // meters
  double normal_perturb_sigma = 0.15;   // radians
  int views_per_shape = 20;
  int min_patch_points = 8;
  int max_patch_points = 64;   // encoder input cap during dataset generation
  double center_jitter = 0.01; // meters; matches voxel-center offsets at fusion time
  int image_width = 160;
  int image_height = 120;
  double focal = 120.0;
};

// Renders each shape from random viewpoints, cuts the unprojected clouds into
// overlapping patches with analytic normals, perturbs them with the sensor
// noise model, and labels query points with exact signed distances.
std::vector<PatchSample> generate_patch_dataset(const std::vector<SdfScene>& shapes,
                                                const PatchConfig& cfg, std::uint64_t seed,
                                                ExecMode mode = ExecMode::kParallel);

// Shape family used for codec training at desk scale: planes, spheres, boxes,
// cylinders and dihedral edges in random poses.
std::vector<SdfScene> codec_training_shapes(std::uint64_t seed, int count = 8);

struct TrainConfig {
  int batch_size = 16;
  double lr = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Codec codec;
  std::vector<double> epoch_loss;  // mean L1 per epoch, patch units
};

// Joint encoder/decoder training on mean L1 between decoded and ground-truth
// signed distances. Deterministic given the seed. Throws if the loss goes
// non-finite.
TrainResult train_codec(const std::vector<PatchSample>& dataset, const TrainConfig& cfg,
                        ExecMode mode = ExecMode::kParallel);

// Mean |decoded - ground truth| in meters over every query of every sample.
double evaluate_codec(const Codec& codec, const std::vector<PatchSample>& dataset,
                      ExecMode mode = ExecMode::kParallel);

}  // namespace bnv
