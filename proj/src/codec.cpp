#include "bnv/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Geometry>

#include "bnv/point_grid.hpp"
#include "bnv/render.hpp"

namespace bnv {

Codec make_codec(Rng& rng, int latent_dim, double patch_radius) {
  Codec codec;
  codec.latent_dim = latent_dim;
  codec.patch_radius = patch_radius;
  codec.encoder = nn::make_mlp(6, {128, 128, 128, latent_dim}, nn::Activation::kRelu,
                               nn::Activation::kIdentity, rng);
  codec.decoder = nn::make_mlp(latent_dim + 3, {128, 128, 128, 1}, nn::Activation::kRelu,
                               nn::Activation::kIdentity, rng);
  return codec;
}

nn::Vector encode_patch(const Codec& codec, const nn::Matrix& local_points, ExecMode mode) {
  if (local_points.rows() == 0) throw std::invalid_argument("encode_patch: empty patch");
  if (local_points.cols() != 6)
    throw std::invalid_argument("encode_patch: expected 6 columns (position, normal)");
  const nn::Matrix features = nn::mlp_forward(codec.encoder, local_points, nullptr, mode);
  return features.colwise().mean().transpose();
}

double decode_point(const Codec& codec, const nn::Vector& latent, const Eigen::Vector3d& x_local) {
  if (latent.size() != codec.latent_dim)
    throw std::invalid_argument("decode_point: latent dimension mismatch");
  nn::Matrix in(1, codec.latent_dim + 3);
  in.leftCols(codec.latent_dim) = latent.transpose();
  in.rightCols(3) = x_local.transpose();
  const nn::Matrix out = nn::mlp_forward(codec.decoder, in, nullptr, ExecMode::kSerial);
  return out(0, 0) * codec.patch_radius;
}

nn::Vector decode_batch(const Codec& codec, const nn::Vector& latent, const nn::Matrix& queries,
                        ExecMode mode) {
  if (latent.size() != codec.latent_dim)
    throw std::invalid_argument("decode_batch: latent dimension mismatch");
  nn::Matrix in(queries.rows(), codec.latent_dim + 3);
  in.leftCols(codec.latent_dim).rowwise() = latent.transpose();
  in.rightCols(3) = queries;
  return nn::mlp_forward(codec.decoder, in, nullptr, mode).col(0) * codec.patch_radius;
}

DecodeGradient decode_point_gradient(const Codec& codec, const nn::Vector& latent,
                                     const Eigen::Vector3d& x_local) {
  nn::Matrix in(1, codec.latent_dim + 3);
  in.leftCols(codec.latent_dim) = latent.transpose();
  in.rightCols(3) = x_local.transpose();
  nn::ForwardCache cache;
  nn::mlp_forward(codec.decoder, in, &cache, ExecMode::kSerial);
  nn::Matrix dl_dy(1, 1);
  dl_dy(0, 0) = codec.patch_radius;  // output is scaled to meters
  const nn::Matrix dl_din =
      nn::mlp_backward(codec.decoder, cache, dl_dy, nullptr, ExecMode::kSerial);
  DecodeGradient g;
  g.dlatent = dl_din.row(0).head(codec.latent_dim).transpose();
  g.dx_local = dl_din.row(0).tail(3).transpose();
  return g;
}

// ---------------------------------------------------------------------------
// Patch dataset generation
// ---------------------------------------------------------------------------

namespace {

Eigen::Vector3d perturb_normal(const Eigen::Vector3d& n, double sigma, Rng& rng) {
  if (sigma <= 0.0) return n;
  const Eigen::Vector3d axis = rng.unit_vector();
  const double angle = rng.normal(0.0, sigma);
  return Eigen::AngleAxisd(angle, axis) * n;
}

// Patches for one rendered view of one shape.
void build_view_patches(const SdfScene& scene, const PatchConfig& cfg, Rng rng,
                        std::vector<PatchSample>& out) {
  CameraIntrinsics intr;
  intr.width = cfg.image_width;
  intr.height = cfg.image_height;
  intr.fx = intr.fy = cfg.focal;
  intr.cx = cfg.image_width / 2.0;
  intr.cy = cfg.image_height / 2.0;

  Eigen::Vector3d lo, hi;
  scene.bounds(lo, hi);
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  const double scene_radius = 0.5 * (hi - lo).norm();

  DepthMap depth;
  Pose pose;
  PointCloud cloud;
  bool ok = false;
  for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
    const Eigen::Vector3d dir = rng.unit_vector();
    const double dist = scene_radius * rng.uniform(1.2, 2.0) + 0.4;
    pose = look_at_pose(center + dist * dir, center + 0.05 * scene_radius * rng.normal3());
    depth = render_depth(scene, intr, pose, {}, ExecMode::kSerial);
    cloud = unproject(depth, intr);
    ok = cloud.size() >= 64;
  }
  if (!ok) throw std::runtime_error("generate_patch_dataset: shape not visible after retries");

  // World-frame points with analytic, camera-facing normals.
  std::vector<Eigen::Vector3d> points(cloud.size());
  std::vector<Eigen::Vector3d> normals(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    points[i] = pose.apply(cloud.points[i]);
    Eigen::Vector3d n = scene.normal(points[i]);
    if (n.dot(pose.translation - points[i]) < 0.0) n = -n;
    normals[i] = n;
  }

  PointGrid grid(points, cfg.patch_radius);
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);

  const double r = cfg.patch_radius;
  const int n_seeds = std::min<std::size_t>(cfg.seeds_per_view, order.size());
  std::vector<std::size_t> nbrs;
  for (int s = 0; s < n_seeds; ++s) {
    const Eigen::Vector3d seed = points[order[s]];
    Eigen::Vector3d patch_center = seed;
    for (int a = 0; a < 3; ++a) patch_center[a] += rng.uniform(-cfg.center_jitter, cfg.center_jitter);

    grid.neighbors_within(patch_center, r, nbrs);
    if (static_cast<int>(nbrs.size()) < cfg.min_patch_points) continue;
    if (static_cast<int>(nbrs.size()) > cfg.max_patch_points) {
      for (std::size_t i = nbrs.size(); i > 1; --i) std::swap(nbrs[i - 1], nbrs[rng.uniform_index(i)]);
      nbrs.resize(cfg.max_patch_points);
    }

    // Noisy encoder inputs; points pushed out of the patch cuboid are dropped.
    std::vector<Eigen::Matrix<double, 6, 1>> rows;
    rows.reserve(nbrs.size());
    for (std::size_t i : nbrs) {
      const Eigen::Vector3d noisy = points[i] + cfg.surface_noise_sigma * rng.normal3();
      const Eigen::Vector3d local = (noisy - patch_center) / r;
      if (local.cwiseAbs().maxCoeff() > 1.0) continue;
      Eigen::Matrix<double, 6, 1> row;
      row.head<3>() = local;
      row.tail<3>() = perturb_normal(normals[i], cfg.normal_perturb_sigma, rng);
      rows.push_back(row);
    }
    if (static_cast<int>(rows.size()) < cfg.min_patch_points) continue;

    PatchSample sample;
    sample.local_points.resize(static_cast<Eigen::Index>(rows.size()), 6);
    for (std::size_t i = 0; i < rows.size(); ++i) sample.local_points.row(i) = rows[i].transpose();

    // Queries: half in a band around the clean surface, half uniform in the
    // cuboid; all labels are exact and kept within +-patch_radius.
    const int m = cfg.queries_per_patch;
    sample.query_points.resize(m, 3);
    sample.query_sdf.resize(m);
    for (int q = 0; q < m; ++q) {
      Eigen::Vector3d query = seed;
      bool accepted = false;
      for (int attempt = 0; attempt < 64 && !accepted; ++attempt) {
        if (q % 2 == 0) {
          const std::size_t pick = nbrs[rng.uniform_index(nbrs.size())];
          const double offset = rng.uniform(-2.0 * cfg.surface_noise_sigma, 2.0 * cfg.surface_noise_sigma);
          query = points[pick] + offset * normals[pick];
        } else {
          for (int a = 0; a < 3; ++a) query[a] = patch_center[a] + r * rng.uniform(-1.0, 1.0);
        }
        accepted = (query - patch_center).cwiseAbs().maxCoeff() <= r &&
                   std::abs(scene.sdf(query)) <= r;
      }
      if (!accepted) query = seed;  // on-surface fallback
      sample.query_points.row(q) = ((query - patch_center) / r).transpose();
      sample.query_sdf(q) = scene.sdf(query);
    }
    out.push_back(std::move(sample));
  }
}

}  // namespace

std::vector<PatchSample> generate_patch_dataset(const std::vector<SdfScene>& shapes,
                                                const PatchConfig& cfg, std::uint64_t seed,
                                                ExecMode mode) {
  if (shapes.empty()) throw std::invalid_argument("generate_patch_dataset: no shapes");
  Rng master(seed);
  const std::size_t n_tasks = shapes.size() * static_cast<std::size_t>(cfg.views_per_shape);
  std::vector<std::vector<PatchSample>> per_task(n_tasks);
  parallel_for(
      n_tasks,
      [&](std::size_t task) {
        const SdfScene& scene = shapes[task / cfg.views_per_shape];
        build_view_patches(scene, cfg, master.fork(task), per_task[task]);
      },
      mode);
  std::vector<PatchSample> dataset;
  for (auto& chunk : per_task)
    for (auto& sample : chunk) dataset.push_back(std::move(sample));
  return dataset;
}

std::vector<SdfScene> codec_training_shapes(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<SdfScene> shapes;
  for (int i = 0; i < count; ++i) {
    SdfScene scene;
    const Eigen::Quaterniond q = Eigen::Quaterniond(Eigen::AngleAxisd(
                                     rng.uniform(0.0, 2.0 * M_PI), rng.unit_vector()))
                                     .normalized();
    switch (i % 5) {
      case 0:
        scene.primitives.push_back(make_plane(Eigen::Vector3d::Zero(), rng.unit_vector()));
        break;
      case 1:
        scene.primitives.push_back(
            make_sphere(Eigen::Vector3d::Zero(), rng.uniform(0.25, 0.65)));
        break;
      case 2:
        scene.primitives.push_back(make_box(
            Eigen::Vector3d::Zero(),
            Eigen::Vector3d(rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5), rng.uniform(0.05, 0.4)),
            q));
        break;
      case 3:
        scene.primitives.push_back(
            make_cylinder(Eigen::Vector3d::Zero(), rng.uniform(0.15, 0.4), rng.uniform(0.2, 0.5), q));
        break;
      default:
        scene.primitives.push_back(make_wedge(Eigen::Vector3d::Zero(), q));
        break;
    }
    shapes.push_back(std::move(scene));
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct SampleGrads {
  nn::MlpGrads encoder;
  nn::MlpGrads decoder;
  double loss_sum = 0.0;
  std::size_t query_count = 0;
};

// L1 loss and full parameter gradients for one patch sample, in patch units.
void sample_forward_backward(const Codec& codec, const PatchSample& sample, SampleGrads& acc) {
  const Eigen::Index k = sample.local_points.rows();
  const Eigen::Index m = sample.query_points.rows();

  nn::ForwardCache enc_cache;
  const nn::Matrix features =
      nn::mlp_forward(codec.encoder, sample.local_points, &enc_cache, ExecMode::kSerial);
  const nn::Vector latent = features.colwise().mean().transpose();

  nn::Matrix dec_in(m, codec.latent_dim + 3);
  dec_in.leftCols(codec.latent_dim).rowwise() = latent.transpose();
  dec_in.rightCols(3) = sample.query_points;
  nn::ForwardCache dec_cache;
  const nn::Matrix pred = nn::mlp_forward(codec.decoder, dec_in, &dec_cache, ExecMode::kSerial);

  const nn::Vector target = sample.query_sdf / codec.patch_radius;
  nn::Matrix dl_dpred(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double res = pred(i, 0) - target(i);
    acc.loss_sum += std::abs(res);
    dl_dpred(i, 0) = res > 0.0 ? 1.0 : (res < 0.0 ? -1.0 : 0.0);
  }
  acc.query_count += static_cast<std::size_t>(m);

  const nn::Matrix dl_dec_in =
      nn::mlp_backward(codec.decoder, dec_cache, dl_dpred, &acc.decoder, ExecMode::kSerial);
  const nn::Vector dlatent = dl_dec_in.leftCols(codec.latent_dim).colwise().sum().transpose();

  nn::Matrix dl_features(k, codec.latent_dim);
  dl_features.rowwise() = (dlatent / static_cast<double>(k)).transpose();
  nn::mlp_backward(codec.encoder, enc_cache, dl_features, &acc.encoder, ExecMode::kSerial);
}

}  // namespace

TrainResult train_codec(const std::vector<PatchSample>& dataset, const TrainConfig& cfg,
                        ExecMode mode) {
  if (dataset.empty()) throw std::invalid_argument("train_codec: empty dataset");
  Rng rng(cfg.seed);
  TrainResult result;
  result.codec = make_codec(rng);
  Codec& codec = result.codec;

  nn::MlpAdam enc_adam(codec.encoder);
  nn::MlpAdam dec_adam(codec.decoder);
  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  constexpr std::size_t kGradChunk = 4;  // fixed merge granularity
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    double epoch_loss = 0.0;
    std::size_t epoch_queries = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n = stop - start;
      const std::size_t n_chunks = (n + kGradChunk - 1) / kGradChunk;
      std::vector<SampleGrads> partials(n_chunks);
      parallel_for_chunks(
          n, kGradChunk,
          [&](std::size_t begin, std::size_t end) {
            SampleGrads& acc = partials[begin / kGradChunk];
            acc.encoder.set_zero(codec.encoder);
            acc.decoder.set_zero(codec.decoder);
            for (std::size_t i = begin; i < end; ++i)
              sample_forward_backward(codec, dataset[order[start + i]], acc);
          },
          mode);

      nn::MlpGrads enc_grads, dec_grads;
      enc_grads.set_zero(codec.encoder);
      dec_grads.set_zero(codec.decoder);
      double batch_loss = 0.0;
      std::size_t batch_queries = 0;
      for (const auto& p : partials) {
        enc_grads.add(p.encoder);
        dec_grads.add(p.decoder);
        batch_loss += p.loss_sum;
        batch_queries += p.query_count;
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_codec: loss diverged (non-finite); lower the learning rate");
      const double inv = batch_queries > 0 ? 1.0 / static_cast<double>(batch_queries) : 0.0;
      enc_grads.scale(inv);
      dec_grads.scale(inv);
      enc_adam.step(codec.encoder, enc_grads, adam);
      dec_adam.step(codec.decoder, dec_grads, adam);
      epoch_loss += batch_loss;
      epoch_queries += batch_queries;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_queries));
  }
  return result;
}

double evaluate_codec(const Codec& codec, const std::vector<PatchSample>& dataset, ExecMode mode) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_codec: empty dataset");
  std::vector<double> err(dataset.size(), 0.0);
  std::vector<std::size_t> cnt(dataset.size(), 0);
  parallel_for(
      dataset.size(),
      [&](std::size_t i) {
        const PatchSample& s = dataset[i];
        const nn::Vector latent = encode_patch(codec, s.local_points, ExecMode::kSerial);
        const nn::Vector pred = decode_batch(codec, latent, s.query_points, ExecMode::kSerial);
        err[i] = (pred - s.query_sdf).cwiseAbs().sum();
        cnt[i] = static_cast<std::size_t>(s.query_sdf.size());
      },
      mode);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    total += err[i];
    n += cnt[i];
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

}  // namespace bnv
